import { describe, expect, it } from "vitest";
import { parseLinearModel, pluginHook } from "../src/model";
import { encodeReply, handleLine, LabelsReply, Reply } from "../src/protocol";

const MODEL = parseLinearModel(["2 2", "1 0 0", "0 1 0"].join("\n"));

function roundTrip(line: string): { reply: Reply | null; done: boolean } {
  return handleLine(MODEL, line);
}

describe("handshake", () => {
  it("replies ready with the model dimensions", () => {
    const { reply, done } = roundTrip(JSON.stringify({ type: "hello", protocol: 1 }));
    expect(done).toBe(false);
    expect(reply).toEqual({ type: "ready", classes: 2, input_dim: 2 });
  });

  it("rejects an unknown protocol version", () => {
    const { reply } = roundTrip(JSON.stringify({ type: "hello", protocol: 99 }));
    expect(reply).toMatchObject({ type: "error" });
  });
});

describe("classify", () => {
  it("answers with exactly count labels and the echoed id", () => {
    const req = { type: "classify", id: 7, count: 3, dim: 2, data: [5, 0, 0, 5, 1, 2] };
    const { reply } = roundTrip(JSON.stringify(req));
    const labels = reply as LabelsReply;
    expect(labels.type).toBe("labels");
    expect(labels.id).toBe(7);
    expect(labels.labels).toEqual([0, 1, 1]);
  });

  it("keeps the connection after a dim mismatch", () => {
    const bad = { type: "classify", id: 1, count: 1, dim: 3, data: [0, 0, 0] };
    const first = roundTrip(JSON.stringify(bad));
    expect(first.done).toBe(false);
    expect(first.reply).toMatchObject({ type: "error", id: 1 });
    const good = { type: "classify", id: 2, count: 1, dim: 2, data: [1, 0] };
    const second = roundTrip(JSON.stringify(good));
    expect(second.reply).toMatchObject({ type: "labels", id: 2, labels: [0] });
  });

  it("rejects a data payload of the wrong length", () => {
    const req = { type: "classify", id: 3, count: 2, dim: 2, data: [1, 2, 3] };
    expect(roundTrip(JSON.stringify(req)).reply).toMatchObject({ type: "error", id: 3 });
  });

  it("turns classifier exceptions into error objects", () => {
    const throwing = pluginHook({
      classes: 2,
      inputDim: 1,
      classify: () => {
        throw new Error("boom");
      },
    });
    const req = { type: "classify", id: 4, count: 1, dim: 1, data: [0] };
    const { reply, done } = handleLine(throwing, JSON.stringify(req));
    expect(done).toBe(false);
    expect(reply).toMatchObject({ type: "error", id: 4 });
    expect((reply as { msg: string }).msg).toContain("boom");
  });
});

describe("session control", () => {
  it("signals completion on bye without a reply", () => {
    const { reply, done } = roundTrip(JSON.stringify({ type: "bye" }));
    expect(reply).toBeNull();
    expect(done).toBe(true);
  });

  it("answers malformed JSON with an error object and survives", () => {
    const { reply, done } = roundTrip("{not json");
    expect(done).toBe(false);
    expect(reply).toMatchObject({ type: "error", id: null });
  });

  it("every reply encodes as one JSON line", () => {
    const replies = [
      roundTrip(JSON.stringify({ type: "hello", protocol: 1 })).reply,
      roundTrip(JSON.stringify({ type: "classify", id: 0, count: 1, dim: 2, data: [0, 0] })).reply,
      roundTrip("junk").reply,
    ];
    for (const reply of replies) {
      const text = encodeReply(reply as Reply);
      expect(text.endsWith("\n")).toBe(true);
      expect(text.slice(0, -1).includes("\n")).toBe(false);
      expect(() => JSON.parse(text)).not.toThrow();
    }
  });

  it("determinism: identical request lines produce identical reply bytes", () => {
    const line = JSON.stringify({ type: "classify", id: 5, count: 2, dim: 2, data: [0.1, 0.9, 0.9, 0.1] });
    const a = encodeReply(roundTrip(line).reply as Reply);
    const b = encodeReply(roundTrip(line).reply as Reply);
    expect(a).toBe(b);
  });
});
