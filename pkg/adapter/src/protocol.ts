/**
 * Newline-delimited JSON oracle protocol, one object per line:
 *
 *   engine -> {"type":"hello","protocol":1}
 *   adapter -> {"type":"ready","classes":K,"input_dim":D}
 *   engine -> {"type":"classify","id":N,"count":C,"dim":D,"data":[...C*D floats]}
 *   adapter -> {"type":"labels","id":N,"labels":[...C ints]}
 *   engine -> {"type":"bye"}   (adapter exits 0)
 *
 * Requests are handled strictly sequentially. A malformed request yields an
 * error object and the connection survives; only transport-level failures
 * are fatal.
 */

import { Classifier } from "./model";

export const PROTOCOL_VERSION = 1;

export interface HelloMessage {
  type: "hello";
  protocol: number;
}

export interface ClassifyMessage {
  type: "classify";
  id: number;
  count: number;
  dim: number;
  data: number[];
}

export interface ReadyReply {
  type: "ready";
  classes: number;
  input_dim: number;
}

export interface LabelsReply {
  type: "labels";
  id: number;
  labels: number[];
}

export interface ErrorReply {
  type: "error";
  id: number | null;
  msg: string;
}

export type Reply = ReadyReply | LabelsReply | ErrorReply;

export interface HandleResult {
  reply: Reply | null;
  done: boolean;
}

function errorReply(id: number | null, msg: string): HandleResult {
  return { reply: { type: "error", id, msg }, done: false };
}

/** Handle one request line; pure apart from calling the classifier. */
export function handleLine(classifier: Classifier, line: string): HandleResult {
  if (line.trim().length === 0) {
    return { reply: null, done: false };
  }
  let msg: unknown;
  try {
    msg = JSON.parse(line);
  } catch {
    return errorReply(null, "request is not valid JSON");
  }
  if (typeof msg !== "object" || msg === null || typeof (msg as { type?: unknown }).type !== "string") {
    return errorReply(null, "request must be an object with a string `type`");
  }
  const typed = msg as { type: string; id?: unknown };

  switch (typed.type) {
    case "hello": {
      const hello = msg as Partial<HelloMessage>;
      if (hello.protocol !== PROTOCOL_VERSION) {
        return errorReply(null, `unsupported protocol ${hello.protocol}`);
      }
      return {
        reply: { type: "ready", classes: classifier.classes, input_dim: classifier.inputDim },
        done: false,
      };
    }
    case "classify": {
      const req = msg as Partial<ClassifyMessage>;
      const id = typeof req.id === "number" ? req.id : null;
      if (id === null || !Number.isInteger(req.count) || !Number.isInteger(req.dim)) {
        return errorReply(id, "classify needs integer id, count, and dim");
      }
      if (req.dim !== classifier.inputDim) {
        return errorReply(id, `dim ${req.dim} does not match handshake input_dim ${classifier.inputDim}`);
      }
      const count = req.count as number;
      if (count < 0 || !Array.isArray(req.data) || req.data.length !== count * classifier.inputDim) {
        return errorReply(id, "data must hold count*dim numbers");
      }
      const data = req.data as number[];
      if (data.some((v) => typeof v !== "number" || !Number.isFinite(v))) {
        return errorReply(id, "data must hold finite numbers");
      }
      const batch: number[][] = [];
      for (let i = 0; i < count; i++) {
        batch.push(data.slice(i * classifier.inputDim, (i + 1) * classifier.inputDim));
      }
      let labels: number[];
      try {
        labels = classifier.classify(batch);
      } catch (err) {
        return errorReply(id, `classifier failed: ${(err as Error).message}`);
      }
      if (!Array.isArray(labels) || labels.length !== count) {
        return errorReply(id, "classifier returned the wrong number of labels");
      }
      return { reply: { type: "labels", id, labels }, done: false };
    }
    case "bye":
      return { reply: null, done: true };
    default:
      return errorReply(
        typeof typed.id === "number" ? (typed.id as number) : null,
        `unknown type ${typed.type}`
      );
  }
}

export function encodeReply(reply: Reply): string {
  return JSON.stringify(reply) + "\n";
}
