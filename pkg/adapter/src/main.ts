#!/usr/bin/env node
/**
 * Reference classify adapter.
 *
 * Usage: smoothcert-adapter --model PATH [--tcp PORT] [--plugin PATH]
 *
 * Serves exactly one connection (stdio by default, or one TCP client),
 * answering requests strictly in order, and exits 0 on "bye". Transport
 * failures exit 1.
 */

import * as net from "net";
import * as readline from "readline";
import { Classifier, loadLinearModel, loadPlugin } from "./model";
import { encodeReply, handleLine } from "./protocol";

interface CliArgs {
  model?: string;
  plugin?: string;
  tcp?: number;
}

function parseArgs(argv: string[]): CliArgs {
  const args: CliArgs = {};
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case "--model":
        args.model = argv[++i];
        break;
      case "--plugin":
        args.plugin = argv[++i];
        break;
      case "--tcp":
        args.tcp = Number(argv[++i]);
        break;
      default:
        throw new Error(`unknown argument ${argv[i]}`);
    }
  }
  if (!args.model && !args.plugin) {
    throw new Error("one of --model or --plugin is required");
  }
  if (args.tcp !== undefined && (!Number.isInteger(args.tcp) || args.tcp < 0 || args.tcp > 65535)) {
    throw new Error("--tcp needs a port in [0, 65535]");
  }
  return args;
}

function serveStream(
  classifier: Classifier,
  input: NodeJS.ReadableStream,
  output: NodeJS.WritableStream,
  onDone: () => void
): void {
  const rl = readline.createInterface({ input, crlfDelay: Infinity });
  rl.on("line", (line) => {
    const result = handleLine(classifier, line);
    if (result.reply !== null) {
      output.write(encodeReply(result.reply));
    }
    if (result.done) {
      rl.close();
      onDone();
    }
  });
}

function main(): void {
  let args: CliArgs;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    process.stderr.write(`usage error: ${(err as Error).message}\n`);
    process.exit(1);
  }

  let classifier: Classifier;
  try {
    classifier = args.plugin ? loadPlugin(args.plugin) : loadLinearModel(args.model as string);
  } catch (err) {
    process.stderr.write(`cannot load classifier: ${(err as Error).message}\n`);
    process.exit(1);
  }

  if (args.tcp !== undefined) {
    const server = net.createServer((socket) => {
      socket.on("error", () => process.exit(1));
      serveStream(classifier, socket, socket, () => {
        socket.end();
        server.close(() => process.exit(0));
      });
    });
    server.on("error", (err) => {
      process.stderr.write(`tcp error: ${err.message}\n`);
      process.exit(1);
    });
    server.listen(args.tcp, "127.0.0.1");
  } else {
    process.stdin.on("error", () => process.exit(1));
    process.stdout.on("error", () => process.exit(1));
    serveStream(classifier, process.stdin, process.stdout, () => process.exit(0));
  }
}

main();
