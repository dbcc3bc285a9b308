import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { createApp } from "../src/app";
import { DEFAULT_CONFIG, parseConfig } from "../src/config";
import { stubVector } from "../src/stub";
import { RunningServer, listen } from "./helpers";

let server: RunningServer;

beforeAll(async () => {
  server = await listen(
    createApp(
      parseConfig({
        maxBatchSize: 8,
        models: [
          { id: "stub-16", kind: "stub", dims: 16 },
          { id: "stub-24", kind: "stub", dims: 24, pooling: "hash" },
        ],
      })
    )
  );
});

afterAll(async () => {
  await server.close();
});

async function embed(body: unknown): Promise<Response> {
  return fetch(server.url + "/embed", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: typeof body === "string" ? body : JSON.stringify(body),
  });
}

describe("endpoints", () => {
  it("healthz responds 200 ok", async () => {
    const res = await fetch(server.url + "/healthz");
    expect(res.status).toBe(200);
    expect(await res.json()).toEqual({ status: "ok" });
  });

  it("models lists the served set with dims and pooling, stably", async () => {
    const first = await (await fetch(server.url + "/models")).json();
    expect(first.models).toEqual([
      { id: "stub-16", dims: 16, pooling: "hash" },
      { id: "stub-24", dims: 24, pooling: "hash" },
    ]);
    const second = await (await fetch(server.url + "/models")).json();
    expect(second).toEqual(first);
  });
});

describe("embedding behavior", () => {
  it("same text twice in one batch gives two identical vectors", async () => {
    const res = await embed({ model: "stub-16", texts: ["hello", "hello"] });
    const { vectors } = await res.json();
    expect(vectors[0]).toEqual(vectors[1]);
  });

  it("vectors depend on the model id", async () => {
    const a = await (await embed({ model: "stub-16", texts: ["hello"] })).json();
    const b = await (await embed({ model: "stub-24", texts: ["hello"] })).json();
    expect(a.vectors[0].slice(0, 16)).not.toEqual(b.vectors[0].slice(0, 16));
  });

  it("values stay in [-1, 1)", async () => {
    const res = await embed({ model: "stub-24", texts: ["bounds check", "another"] });
    const { vectors } = await res.json();
    for (const vector of vectors) {
      for (const value of vector) {
        expect(value).toBeGreaterThanOrEqual(-1);
        expect(value).toBeLessThan(1);
      }
    }
  });

  it("response vectors match the stub derivation exactly", async () => {
    const res = await embed({ model: "stub-16", texts: ["pin me"] });
    const { vectors } = await res.json();
    expect(vectors[0]).toEqual(stubVector("stub-16", "pin me", 16));
  });

  it("handles concurrent batches to the same model", async () => {
    const texts = ["a", "b", "c", "d"];
    const responses = await Promise.all(
      texts.map((t) => embed({ model: "stub-16", texts: [t, t] }))
    );
    for (let i = 0; i < texts.length; i++) {
      const { vectors } = await responses[i].json();
      expect(vectors[0]).toEqual(stubVector("stub-16", texts[i], 16));
      expect(vectors[1]).toEqual(vectors[0]);
    }
  });
});

describe("errors", () => {
  it.each([
    ["empty model", { model: "", texts: ["x"] }],
    ["missing model", { texts: ["x"] }],
    ["empty texts", { model: "stub-16", texts: [] }],
    ["empty string in texts", { model: "stub-16", texts: ["ok", ""] }],
    ["texts not strings", { model: "stub-16", texts: [1, 2] }],
    ["extra keys", { model: "stub-16", texts: ["x"], pooling: "mean" }],
  ])("400 on %s", async (_label, body) => {
    const res = await embed(body);
    expect(res.status).toBe(400);
    const doc = await res.json();
    expect(typeof doc.error).toBe("string");
  });

  it("400 on malformed JSON body", async () => {
    const res = await embed("{not json");
    expect(res.status).toBe(400);
  });

  it("413 when the batch exceeds the configured cap", async () => {
    const texts = Array.from({ length: 9 }, (_, i) => `t${i}`);
    const res = await embed({ model: "stub-16", texts });
    expect(res.status).toBe(413);
    const doc = await res.json();
    expect(doc.error).toContain("9");
  });
});

describe("config", () => {
  it("rejects duplicate model ids", () => {
    expect(() =>
      parseConfig({
        models: [
          { id: "m", kind: "stub", dims: 4 },
          { id: "m", kind: "stub", dims: 8 },
        ],
      })
    ).toThrow(/duplicate/);
  });

  it("rejects unknown model kinds", () => {
    expect(() =>
      parseConfig({ models: [{ id: "real", kind: "onnx", dims: 4 }] })
    ).toThrow();
  });

  it("defaults are a valid two-model stub setup", () => {
    expect(DEFAULT_CONFIG.models.map((m) => m.id)).toEqual(["stub-16", "stub-24"]);
    expect(DEFAULT_CONFIG.maxBatchSize).toBe(256);
  });
});
