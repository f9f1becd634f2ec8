/**
 * Adapts V8's precise coverage to the `wuppie-cov-1` wire protocol.
 *
 * The instrumentation source is the engine itself: Profiler.takePreciseCoverage
 * reports executed byte ranges for every function of the compiled handler
 * module. At startup the adapter snapshots those ranges once to freeze the
 * set of executable lines (the bit mapping and total_bits stay constant for
 * the process lifetime); afterwards each fetch translates covered ranges into
 * line bits. Reset stops and restarts precise coverage, clearing V8's
 * accumulator.
 */

import * as fs from "node:fs";
import * as http from "node:http";
import { Session } from "node:inspector/promises";

interface CoverageRange {
  startOffset: number;
  endOffset: number;
  count: number;
}

interface FunctionCoverage {
  functionName: string;
  ranges: CoverageRange[];
  isBlockCoverage: boolean;
}

interface ScriptCoverage {
  scriptId: string;
  url: string;
  functions: FunctionCoverage[];
}

function lineStartOffsets(source: string): number[] {
  const offsets = [0];
  for (let i = 0; i < source.length; i++) {
    if (source[i] === "\n") {
      offsets.push(i + 1);
    }
  }
  return offsets;
}

function lineOfOffset(starts: number[], offset: number): number {
  let lo = 0;
  let hi = starts.length - 1;
  while (lo < hi) {
    const mid = (lo + hi + 1) >> 1;
    if (starts[mid] <= offset) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return lo;
}

export class CoverageAgent {
  private session = new Session();
  private lineStarts: number[] = [];
  /** source line -> bit index; frozen after init */
  private lineToBit = new Map<number, number>();
  /** union of line hits drained from V8 since the last reset */
  private accumulator: Buffer = Buffer.alloc(0);
  totalBits = 0;

  constructor(private scriptSuffix: string, private scriptPath: string) {}

  /** Connect and start precise coverage. The handler module must be loaded
   * (required) only after this: V8 reports coverage for scripts compiled
   * once the profiler session is running. */
  async startSession(): Promise<void> {
    this.session.connect();
    await this.session.post("Profiler.enable");
    await this.session.post("Profiler.startPreciseCoverage", {
      callCount: true,
      detailed: true,
    });
  }

  /** Snapshot the loaded handler module once and freeze the line mapping. */
  async freezeMapping(): Promise<void> {
    const source = fs.readFileSync(this.scriptPath, "utf8");
    this.lineStarts = lineStartOffsets(source);
    const executable = new Set<number>();
    for (const fn of (await this.takeRaw()).functions) {
      for (const range of fn.ranges) {
        const first = lineOfOffset(this.lineStarts, range.startOffset);
        const last = lineOfOffset(this.lineStarts, Math.max(range.endOffset - 1, 0));
        for (let line = first; line <= last; line++) {
          executable.add(line);
        }
      }
    }
    for (const line of [...executable].sort((a, b) => a - b)) {
      this.lineToBit.set(line, this.lineToBit.size);
    }
    this.totalBits = this.lineToBit.size;
    this.accumulator = Buffer.alloc(Math.ceil(this.totalBits / 8));
  }

  private async takeRaw(): Promise<ScriptCoverage> {
    // takePreciseCoverage drains and resets V8's counters but keeps block
    // instrumentation alive; stop/start would degrade already-compiled
    // functions to whole-function granularity
    const { result } = (await this.session.post("Profiler.takePreciseCoverage")) as {
      result: ScriptCoverage[];
    };
    const script = result.find((s) => s.url.endsWith(this.scriptSuffix));
    return script ?? { scriptId: "", url: "", functions: [] };
  }

  /** Merge the lines executed since the last drain into the accumulator. */
  private async drain(): Promise<void> {
    const script = await this.takeRaw();
    // enclosing ranges first, nested ranges override their span: a count-0
    // block inside an executed function marks the branch as not taken
    const ranges: CoverageRange[] = [];
    for (const fn of script.functions) {
      ranges.push(...fn.ranges);
    }
    ranges.sort((a, b) => a.startOffset - b.startOffset || b.endOffset - a.endOffset);
    const lineCounts = new Map<number, number>();
    for (const range of ranges) {
      const first = lineOfOffset(this.lineStarts, range.startOffset);
      const last = lineOfOffset(this.lineStarts, Math.max(range.endOffset - 1, 0));
      for (let line = first; line <= last; line++) {
        if (this.lineToBit.has(line)) {
          lineCounts.set(line, range.count);
        }
      }
    }
    for (const [line, count] of lineCounts) {
      if (count > 0) {
        const bit = this.lineToBit.get(line)!;
        this.accumulator[bit >> 3] |= 1 << (bit & 7);
      }
    }
  }

  /** Current accumulator as a `wuppie-cov-1` bitmap, optionally resetting. */
  async snapshot(reset: boolean): Promise<Buffer> {
    await this.drain();
    const bitmap = Buffer.from(this.accumulator);
    if (reset) {
      this.accumulator.fill(0);
    }
    return bitmap;
  }
}

export function createAgentServer(agent: CoverageAgent): http.Server {
  return http.createServer((req, res) => {
    const url = new URL(req.url ?? "/", "http://agent");
    if (url.pathname !== "/coverage" || req.method !== "GET") {
      const body = JSON.stringify({ error: "no such path" });
      res.writeHead(404, { "Content-Type": "application/json", "Content-Length": Buffer.byteLength(body) });
      res.end(body);
      return;
    }
    const reset = url.searchParams.get("reset") === "true";
    agent
      .snapshot(reset)
      .then((bitmap) => {
        const body = JSON.stringify({
          format: "wuppie-cov-1",
          total_bits: agent.totalBits,
          bitmap: bitmap.toString("base64"),
        });
        res.writeHead(200, {
          "Content-Type": "application/json",
          "Content-Length": Buffer.byteLength(body),
        });
        res.end(body);
      })
      .catch((err) => {
        const body = JSON.stringify({ error: String(err) });
        res.writeHead(500, { "Content-Type": "application/json", "Content-Length": Buffer.byteLength(body) });
        res.end(body);
      });
  });
}
