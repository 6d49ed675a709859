"""Organizational specifications enforced on multi-agent reinforcement
learning, with trajectory mining of the implicit organization agents adopt.
"""

__version__ = "0.1.0"

from .guides import (
    ALL,
    GoalRewardGuide,
    Linkers,
    RagRule,
    RoleActionGuide,
    RoleGuides,
    RoleRewardGuide,
    linkers_from_dict,
    load_org_document,
    mission_bonus,
)
from .orgspec import (
    ANY_TIME,
    DeonticRelation,
    Goal,
    Group,
    Interval,
    Link,
    Mission,
    OrgSpec,
    Plan,
    Role,
    load_spec,
    rds_lookup,
    save_spec,
    validate,
)
from .patterns import Leaf, Node, Pattern, STAR, WILDCARD, matches, parse_pattern, pattern_text
from .temm import TemmParams, TemmReport, run_temm
from .trajectory import History, JointHistory, LabelMap, lcs, lcs_length
from .training import EvalLog, TabularPolicy, TrainConfig, evaluate, train
