// Conformance against the recorded wire-contract fixture shared with the
// consuming package's HTTP embedding client. The fixture is the single
// source of truth for the request shape, response keys, and error behavior;
// if either side drifts, one of the two suites breaks.
import { readFileSync } from "node:fs";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { createApp } from "../src/app";
import { DEFAULT_CONFIG } from "../src/config";
import { RunningServer, cosine, listen } from "./helpers";

interface WireContract {
  endpoint: string;
  method: string;
  request: { model: string; texts: string[] };
  response_required_keys: string[];
  dims: number;
  constraints: Record<string, boolean>;
}

const contract: WireContract = JSON.parse(
  readFileSync(
    join(__dirname, "..", "..", "tests", "fixtures", "embed_wire_contract.json"),
    "utf8"
  )
);

let server: RunningServer;

beforeAll(async () => {
  server = await listen(createApp(DEFAULT_CONFIG));
});

afterAll(async () => {
  await server.close();
});

async function post(body: unknown): Promise<Response> {
  return fetch(server.url + contract.endpoint, {
    method: contract.method,
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
}

describe("wire contract fixture", () => {
  it("serves the recorded request with the required response shape", async () => {
    const res = await post(contract.request);
    expect(res.status).toBe(200);
    const doc = await res.json();
    for (const key of contract.response_required_keys) {
      expect(doc).toHaveProperty(key);
    }
    expect(doc.model).toBe(contract.request.model);
    expect(doc.dims).toBe(contract.dims);
    expect(doc.vectors).toHaveLength(contract.request.texts.length);
    for (const vector of doc.vectors) {
      expect(vector).toHaveLength(contract.dims);
      for (const value of vector) {
        expect(Number.isFinite(value)).toBe(true);
      }
    }
  });

  it("preserves batch order", async () => {
    const res = await post(contract.request);
    const { vectors } = await res.json();
    // each position must equal the vector for that text embedded alone
    for (let i = 0; i < contract.request.texts.length; i++) {
      const single = await post({
        model: contract.request.model,
        texts: [contract.request.texts[i]],
      });
      const doc = await single.json();
      expect(doc.vectors[0]).toEqual(vectors[i]);
    }
  });

  it("is deterministic: cosine(self) = 1 within 1e-6 across requests", async () => {
    const first = await (await post(contract.request)).json();
    const second = await (await post(contract.request)).json();
    for (let i = 0; i < contract.request.texts.length; i++) {
      expect(
        Math.abs(cosine(first.vectors[i], second.vectors[i]) - 1)
      ).toBeLessThanOrEqual(1e-6);
      expect(second.vectors[i]).toEqual(first.vectors[i]);
    }
  });

  it("rejects empty texts with 400", async () => {
    expect(contract.constraints.empty_texts_rejected_with_400).toBe(true);
    const res = await post({ model: contract.request.model, texts: [] });
    expect(res.status).toBe(400);
  });

  it("rejects an unknown model with 400", async () => {
    expect(contract.constraints.unknown_model_rejected_with_400).toBe(true);
    const res = await post({ model: "no-such-model", texts: ["x"] });
    expect(res.status).toBe(400);
    const doc = await res.json();
    expect(doc.error).toContain("no-such-model");
  });
});
