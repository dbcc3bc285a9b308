import express, { Express, NextFunction, Request, Response } from "express";
import { z } from "zod";
import { ServerConfig } from "./config";
import { ModelRegistry } from "./registry";

const EmbedRequest = z
  .object({
    model: z.string().min(1),
    texts: z.array(z.string().min(1)).min(1),
  })
  .strict();

export function createApp(config: ServerConfig): Express {
  const registry = new ModelRegistry(config.models);
  const app = express();
  app.use(express.json({ limit: "5mb" }));

  app.get("/healthz", (_req, res) => {
    res.status(200).json({ status: "ok" });
  });

  app.get("/models", (_req, res) => {
    res.status(200).json({ models: registry.list() });
  });

  app.post("/embed", async (req, res) => {
    const parsed = EmbedRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: parsed.error.issues[0]?.message ?? "invalid request" });
      return;
    }
    const { model: modelId, texts } = parsed.data;
    const model = registry.get(modelId);
    if (!model) {
      res.status(400).json({ error: `unknown model '${modelId}'` });
      return;
    }
    if (texts.length > config.maxBatchSize) {
      res.status(413).json({
        error: `batch of ${texts.length} exceeds cap ${config.maxBatchSize}`,
      });
      return;
    }
    try {
      const vectors = await registry.embedSerialized(model, texts);
      res.status(200).json({ model: model.id, dims: model.dims, vectors });
    } catch (err) {
      res.status(500).json({ error: err instanceof Error ? err.message : "inference failed" });
    }
  });

  // body-parser syntax errors and anything a route threw synchronously
  app.use((err: unknown, _req: Request, res: Response, _next: NextFunction) => {
    if (err instanceof SyntaxError) {
      res.status(400).json({ error: "request body is not valid JSON" });
      return;
    }
    res.status(500).json({ error: "internal error" });
  });

  return app;
}
