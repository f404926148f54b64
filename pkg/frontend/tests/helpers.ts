import { readFileSync } from "node:fs";
import path from "node:path";

import { ApiClient } from "../src/api.js";
import type { MetadataDoc } from "../src/types.js";

export function serverUrl(): string {
  const info = JSON.parse(
    readFileSync(path.join(process.cwd(), ".server.json"), "utf-8"),
  ) as { url: string };
  return info.url;
}

export function passwordFor(userId: string): string {
  return `pw-${userId}`;
}

export function login(userId: string): Promise<ApiClient> {
  return ApiClient.login(serverUrl(), userId, passwordFor(userId));
}

export function elementsById(doc: MetadataDoc) {
  return new Map(doc.dataElements.map((e) => [e.id, e]));
}

export function datasetById(doc: MetadataDoc, id: string) {
  const ds = doc.dataSets.find((d) => d.id === id);
  if (!ds) throw new Error(`dataset ${id} not in metadata`);
  return ds;
}
