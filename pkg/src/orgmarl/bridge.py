"""Wire protocol letting external agent-environment-cycle loops use the
organizational layer: a line-delimited JSON request/reply protocol over a
local TCP socket. The engine owns the per-agent histories and the hardness
draws, so clients stay stateless; frames are strictly request-reply ordered.

Frame schema (proto 1) is documented in docs/bridge.md. Summary:

  -> {"proto": 1, "type": "hello", "agents": [...], "obs_labels": {...},
      "act_labels": {...}, "seed": 0}
  <- {"type": "hello", "ok": true, "agents": [...]}

  -> {"type": "reset", "episode": 0}
  <- {"type": "reset", "ok": true}

  -> {"type": "mask", "agent": "a0", "obs": "o1"}            (optional)
  <- {"type": "mask", "mask": [...] | "ALL", "enforced": false}

  -> {"type": "step", "agent": "a0", "obs": "o1",
      "proposed_action": "up", "raw_reward": -0.1}
  <- {"type": "step", "mask": [...] | "ALL", "enforced": true,
      "reshaped_reward_delta": 0.0, "penalty": 0.0, "bonus": 0.0,
      "reward": -0.1}

Error replies are typed: {"type": "error", "error": <code>, ...}; a
"mask_violation" error carries the enforced mask so the client can
re-sample (the turn's hardness draw is kept for the retry).
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import dataclass

from .envs.base import ProtocolError
from .envs.wrapper import Reshaper
from .guides import Linkers, is_all_actions
from .orgspec import OrgSpec
from .training import episode_seed

PROTO_VERSION = 1


class BridgeError(RuntimeError):
    pass


def _mask_json(mask) -> list | str:
    if is_all_actions(mask):
        return "ALL"
    return sorted(mask)


def _alphabet_diagnostics(
    spec: OrgSpec,
    linkers: Linkers,
    agents: list[str],
    obs_labels: dict[str, list[str]],
    act_labels: dict[str, list[str]],
) -> list[str]:
    problems = []
    for agent in agents:
        role = linkers.role_of(agent)
        if role is None:
            problems.append(f"agent {agent!r} has no role binding")
            continue
        guides = linkers.guides_for_role(role)
        if guides.action_guide is None:
            continue
        alphabet = set(act_labels.get(agent, ()))
        observations = set(obs_labels.get(agent, ()))
        for rule in guides.action_guide.rules:
            extra = rule.actions - alphabet
            if extra:
                problems.append(
                    f"agent {agent!r}: rule actions {sorted(extra)} outside the declared alphabet"
                )
            if rule.observation != "#any" and rule.observation not in observations:
                problems.append(
                    f"agent {agent!r}: rule observation {rule.observation!r} not declared"
                )
    return sorted(set(problems))


@dataclass
class _Session:
    """Per-connection engine state."""

    spec: OrgSpec
    linkers: Linkers
    reshaper: Reshaper | None = None
    base_seed: int = 0
    agents: tuple[str, ...] = ()
    ready: bool = False

    def handle(self, frame: dict) -> dict:
        if not isinstance(frame, dict):
            return {"type": "error", "error": "bad_frame", "detail": "frame must be an object"}
        kind = frame.get("type")
        if kind == "hello":
            return self.hello(frame)
        if not self.ready:
            return {"type": "error", "error": "protocol_order", "detail": "hello required first"}
        if kind == "reset":
            return self.reset(frame)
        if kind == "mask":
            return self.mask(frame)
        if kind == "step":
            return self.step(frame)
        return {"type": "error", "error": "unknown_type", "detail": f"unknown frame type {kind!r}"}

    def hello(self, frame: dict) -> dict:
        if frame.get("proto") != PROTO_VERSION:
            return {
                "type": "error",
                "error": "bad_proto",
                "detail": f"engine speaks proto {PROTO_VERSION}",
            }
        agents = [str(a) for a in frame.get("agents", [])]
        if not agents:
            return {"type": "error", "error": "bad_frame", "detail": "agents list required"}
        obs_labels = {str(a): [str(x) for x in v] for a, v in frame.get("obs_labels", {}).items()}
        act_labels = {str(a): [str(x) for x in v] for a, v in frame.get("act_labels", {}).items()}
        if not self.linkers.empty:
            problems = _alphabet_diagnostics(
                self.spec, self.linkers, agents, obs_labels, act_labels
            )
            if problems:
                return {"type": "error", "error": "alphabet_mismatch", "detail": problems}
        self.agents = tuple(agents)
        self.base_seed = int(frame.get("seed", 0))
        self.reshaper = Reshaper(self.spec, self.linkers, seed=self.base_seed)
        self.reshaper.reset(episode_seed(self.base_seed, 0))
        self.ready = True
        return {"type": "hello", "ok": True, "agents": list(self.agents)}

    def reset(self, frame: dict) -> dict:
        episode = int(frame.get("episode", 0))
        self.reshaper.reset(episode_seed(self.base_seed, episode))
        return {"type": "reset", "ok": True, "episode": episode}

    def _agent_obs(self, frame: dict) -> tuple[str, str] | dict:
        agent = frame.get("agent")
        obs = frame.get("obs")
        if not isinstance(agent, str) or agent not in self.agents:
            return {"type": "error", "error": "unknown_agent", "detail": repr(agent)}
        if not isinstance(obs, str):
            return {"type": "error", "error": "bad_frame", "detail": "obs must be a string"}
        return agent, obs

    def mask(self, frame: dict) -> dict:
        got = self._agent_obs(frame)
        if isinstance(got, dict):
            return got
        agent, obs = got
        verdict = self.reshaper.turn_verdict(agent, obs)
        return {
            "type": "mask",
            "mask": _mask_json(verdict.allowed),
            "enforced": verdict.enforced,
        }

    def step(self, frame: dict) -> dict:
        got = self._agent_obs(frame)
        if isinstance(got, dict):
            return got
        agent, obs = got
        action = frame.get("proposed_action")
        if not isinstance(action, str):
            return {"type": "error", "error": "bad_frame", "detail": "proposed_action must be a string"}
        raw = frame.get("raw_reward", 0.0)
        if not isinstance(raw, (int, float)):
            return {"type": "error", "error": "bad_frame", "detail": "raw_reward must be a number"}
        try:
            reward, penalty, bonus, verdict = self.reshaper.apply_turn(
                agent, obs, action, float(raw)
            )
        except ProtocolError:
            verdict = self.reshaper.turn_verdict(agent, obs)
            return {
                "type": "error",
                "error": "mask_violation",
                "mask": _mask_json(verdict.allowed),
                "enforced": verdict.enforced,
            }
        return {
            "type": "step",
            "mask": _mask_json(verdict.allowed),
            "enforced": verdict.enforced,
            "reshaped_reward_delta": penalty + bonus,
            "penalty": penalty,
            "bonus": bonus,
            "reward": reward,
        }


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        session = _Session(spec=self.server.spec, linkers=self.server.linkers)  # type: ignore[attr-defined]
        for line in self.rfile:
            text = line.decode("utf-8").strip()
            if not text:
                continue
            try:
                frame = json.loads(text)
            except json.JSONDecodeError as err:
                reply = {"type": "error", "error": "bad_json", "detail": str(err)}
            else:
                reply = session.handle(frame)
            payload = json.dumps(reply, sort_keys=True) + "\n"
            try:
                self.wfile.write(payload.encode("utf-8"))
                self.wfile.flush()
            except BrokenPipeError:
                return


class BridgeServer(socketserver.ThreadingTCPServer):
    """One engine process; each connection gets an independent session."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, spec: OrgSpec, linkers: Linkers, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.spec = spec
        self.linkers = linkers

    @property
    def port(self) -> int:
        return self.server_address[1]

    def serve_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class BridgeClient:
    """Minimal in-process client, used by tests and the dual-run oracle."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.reader = self.sock.makefile("r", encoding="utf-8")

    def call(self, frame: dict) -> dict:
        self.sock.sendall((json.dumps(frame) + "\n").encode("utf-8"))
        line = self.reader.readline()
        if not line:
            raise BridgeError("connection closed by engine")
        return json.loads(line)

    def hello(
        self,
        agents: list[str],
        obs_labels: dict[str, list[str]],
        act_labels: dict[str, list[str]],
        seed: int = 0,
    ) -> dict:
        return self.call(
            {
                "proto": PROTO_VERSION,
                "type": "hello",
                "agents": agents,
                "obs_labels": obs_labels,
                "act_labels": act_labels,
                "seed": seed,
            }
        )

    def reset(self, episode: int) -> dict:
        return self.call({"type": "reset", "episode": episode})

    def mask(self, agent: str, obs: str) -> dict:
        return self.call({"type": "mask", "agent": agent, "obs": obs})

    def step(self, agent: str, obs: str, action: str, raw_reward: float) -> dict:
        return self.call(
            {
                "type": "step",
                "agent": agent,
                "obs": obs,
                "proposed_action": action,
                "raw_reward": raw_reward,
            }
        )

    def close(self) -> None:
        try:
            self.reader.close()
        finally:
            self.sock.close()
