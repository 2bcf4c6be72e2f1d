/**
 * Persistent pipeline process.
 *
 * Spawns one `sgfsis batch` child and multiplexes line-oriented jobs over
 * its stdin/stdout. Jobs are answered strictly in submission order, so a
 * FIFO of pending resolvers pairs replies with requests; the class is
 * safe to call from concurrent async contexts.
 */

import { ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import { once } from "node:events";

export interface RunnerOptions {
  /** Command line for the pipeline CLI; last resort is `sgfsis` on PATH. */
  command?: string[];
}

function defaultCommand(): string[] {
  const env = process.env["SGFSIS_CLI"];
  if (env !== undefined && env !== "") {
    return env.split(" ");
  }
  return ["sgfsis"];
}

interface Pending {
  resolve: (line: string) => void;
  reject: (err: Error) => void;
}

export class PipelineRunner {
  private child: ChildProcessWithoutNullStreams | null = null;
  private readonly command: string[];
  private readonly pending: Pending[] = [];
  private buffered = "";

  constructor(options: RunnerOptions = {}) {
    this.command = options.command ?? defaultCommand();
  }

  private ensureChild(): ChildProcessWithoutNullStreams {
    if (this.child !== null && this.child.exitCode === null) {
      return this.child;
    }
    const [cmd, ...args] = this.command;
    if (cmd === undefined) {
      throw new Error("empty pipeline command");
    }
    const child = spawn(cmd, [...args, "batch"], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    // a dying child raises EPIPE on its stdin; the exit handler already
    // rejects pending jobs, so swallow the stream-level duplicate
    child.stdin.on("error", () => {});
    child.stdout.setEncoding("utf8");
    child.stdout.on("data", (chunk: string) => this.onData(chunk));
    child.on("exit", () => this.failPending(new Error("pipeline process exited")));
    child.on("error", (err) => this.failPending(err));
    this.child = child;
    return child;
  }

  private onData(chunk: string): void {
    this.buffered += chunk;
    let idx: number;
    while ((idx = this.buffered.indexOf("\n")) >= 0) {
      const line = this.buffered.slice(0, idx).trimEnd();
      this.buffered = this.buffered.slice(idx + 1);
      const next = this.pending.shift();
      if (next !== undefined) {
        next.resolve(line);
      }
    }
  }

  private failPending(err: Error): void {
    while (this.pending.length > 0) {
      this.pending.shift()!.reject(err);
    }
  }

  /** Submit one job line; resolves with the reply payload after `ok `. */
  async submit(job: string): Promise<string> {
    const child = this.ensureChild();
    const reply = new Promise<string>((resolve, reject) => {
      this.pending.push({ resolve, reject });
    });
    child.stdin.write(job + "\n");
    const line = await reply;
    if (line.startsWith("ok")) {
      return line.slice(2).trimStart();
    }
    if (line.startsWith("err ")) {
      // surface the native diagnostic text as a standard Error
      throw new Error(line.slice(4));
    }
    throw new Error(`unexpected pipeline reply: ${line}`);
  }

  async close(): Promise<void> {
    const child = this.child;
    this.child = null;
    if (child === null || child.exitCode !== null) {
      return;
    }
    child.stdin.write("quit\n");
    child.stdin.end();
    await once(child, "exit");
  }
}
