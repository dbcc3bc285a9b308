import { readFileSync } from "node:fs";
import { z } from "zod";

const ModelEntry = z
  .object({
    id: z.string().min(1),
    kind: z.literal("stub"),
    dims: z.number().int().positive(),
    // pooling is metadata surfaced on /models; stubs have no real pooling,
    // real checkpoints would document theirs here (cls, mean, ...)
    pooling: z.string().min(1).default("hash"),
  })
  .strict();

const ConfigSchema = z
  .object({
    port: z.number().int().min(0).max(65535).default(8091),
    maxBatchSize: z.number().int().positive().default(256),
    models: z.array(ModelEntry).min(1),
  })
  .strict();

export type ModelSpec = z.infer<typeof ModelEntry>;
export type ServerConfig = z.infer<typeof ConfigSchema>;

export const DEFAULT_CONFIG: ServerConfig = ConfigSchema.parse({
  models: [
    { id: "stub-16", kind: "stub", dims: 16 },
    { id: "stub-24", kind: "stub", dims: 24 },
  ],
});

export function parseConfig(doc: unknown): ServerConfig {
  const config = ConfigSchema.parse(doc);
  const ids = new Set(config.models.map((m) => m.id));
  if (ids.size !== config.models.length) {
    throw new Error("duplicate model id in config");
  }
  return config;
}

export function loadConfig(path?: string): ServerConfig {
  if (!path) {
    return DEFAULT_CONFIG;
  }
  return parseConfig(JSON.parse(readFileSync(path, "utf8")));
}
