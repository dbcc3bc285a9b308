import { createHash } from "node:crypto";

// Pseudo-embeddings for contract testing: the vector is a pure function of
// (modelId, text), so two requests for the same text are bit-identical and
// different model ids give unrelated vectors. Values lie in [-1, 1).
//
// Derivation: seed = sha256(`${modelId}|${text}`); the value stream is
// sha256(seed || blockIndex) consumed 4 bytes per float. The seed string
// matches the primary package's offline mock provider, which uses the same
// keying so fixtures built on either side agree about which text is which.
export function stubVector(modelId: string, text: string, dims: number): number[] {
  const seed = createHash("sha256").update(`${modelId}|${text}`, "utf8").digest();
  const values: number[] = [];
  let block = 0;
  while (values.length < dims) {
    const counter = Buffer.alloc(4);
    counter.writeUInt32BE(block, 0);
    const bytes = createHash("sha256").update(seed).update(counter).digest();
    for (let offset = 0; offset + 4 <= bytes.length && values.length < dims; offset += 4) {
      const u32 = bytes.readUInt32BE(offset);
      values.push((u32 / 0x100000000) * 2 - 1);
    }
    block += 1;
  }
  return values;
}
