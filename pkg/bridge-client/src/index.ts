export * from "./frames";
export * from "./client";
export * from "./transcript";
