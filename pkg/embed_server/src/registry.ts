import { ModelSpec } from "./config";
import { stubVector } from "./stub";

export interface ServedModel {
  id: string;
  dims: number;
  pooling: string;
  embed(texts: string[]): Promise<number[][]>;
}

// Inference runs serialized per model: each request chains onto the model's
// queue so a heavyweight backend never sees two batches at once. Requests to
// different models still run concurrently, and server state between requests
// is nil.
export class ModelRegistry {
  private models = new Map<string, ServedModel>();
  private queues = new Map<string, Promise<unknown>>();

  constructor(specs: ModelSpec[]) {
    for (const spec of specs) {
      this.models.set(spec.id, {
        id: spec.id,
        dims: spec.dims,
        pooling: spec.pooling,
        embed: async (texts) => texts.map((t) => stubVector(spec.id, t, spec.dims)),
      });
    }
  }

  get(id: string): ServedModel | undefined {
    return this.models.get(id);
  }

  list(): Array<{ id: string; dims: number; pooling: string }> {
    return Array.from(this.models.values(), (m) => ({
      id: m.id,
      dims: m.dims,
      pooling: m.pooling,
    }));
  }

  embedSerialized(model: ServedModel, texts: string[]): Promise<number[][]> {
    const previous = this.queues.get(model.id) ?? Promise.resolve();
    const run = previous.then(
      () => model.embed(texts),
      () => model.embed(texts)
    );
    // keep the chain alive whether or not this batch fails
    this.queues.set(
      model.id,
      run.catch(() => undefined)
    );
    return run;
  }
}
