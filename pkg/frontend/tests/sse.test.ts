import { describe, expect, it } from "vitest";
import { sseJson, sseMessages } from "../src/sse.js";

function streamOf(chunks: string[]): ReadableStream<Uint8Array> {
  const enc = new TextEncoder();
  return new ReadableStream({
    start(ctrl) {
      for (const c of chunks) ctrl.enqueue(enc.encode(c));
      ctrl.close();
    },
  });
}

async function collect<T>(gen: AsyncGenerator<T>): Promise<T[]> {
  const out: T[] = [];
  for await (const v of gen) out.push(v);
  return out;
}

describe("sse parsing", () => {
  it("splits well-formed messages", async () => {
    const got = await collect(
      sseMessages(streamOf(['data: {"a":1}\n\n', 'data: {"b":2}\n\n'])),
    );
    expect(got).toEqual(['{"a":1}', '{"b":2}']);
  });

  it("reassembles messages torn across chunk boundaries", async () => {
    const raw = 'data: {"seq":1,"type":"telemetry"}\n\ndata: {"seq":2}\n\n';
    // split at every possible byte boundary pairwise
    for (let cut = 1; cut < raw.length; cut++) {
      const got = await collect(
        sseMessages(streamOf([raw.slice(0, cut), raw.slice(cut)])),
      );
      expect(got).toEqual(['{"seq":1,"type":"telemetry"}', '{"seq":2}']);
    }
  });

  it("ignores comment keepalives and CRLF endings", async () => {
    const got = await collect(
      sseMessages(streamOf([": keepalive\r\n\r\ndata: {}\r\n\r\n: x\n\n"])),
    );
    expect(got).toEqual(["{}"]);
  });

  it("joins multi-line data fields", async () => {
    const got = await collect(sseMessages(streamOf(["data: [1,\ndata: 2]\n\n"])));
    expect(got).toEqual(["[1,\n2]"]);
  });

  it("decodes JSON and skips torn payloads", async () => {
    const got = await collect(
      sseJson<{ seq: number }>(
        streamOf(['data: {"seq":1}\n\ndata: {bad\n\ndata: {"seq":3}\n\n']),
      ),
    );
    expect(got).toEqual([{ seq: 1 }, { seq: 3 }]);
  });

  it("handles utf-8 split across chunks", async () => {
    const enc = new TextEncoder();
    const bytes = enc.encode('data: {"name":"µ-stage"}\n\n');
    // cut inside the two-byte mu character
    const cut = 16;
    const stream = new ReadableStream<Uint8Array>({
      start(ctrl) {
        ctrl.enqueue(bytes.slice(0, cut));
        ctrl.enqueue(bytes.slice(cut));
        ctrl.close();
      },
    });
    const got = await collect(sseJson<{ name: string }>(stream));
    expect(got).toEqual([{ name: "µ-stage" }]);
  });
});
