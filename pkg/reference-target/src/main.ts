/**
 * Entry point: serve the minipet API on one port and the coverage agent on a
 * second. Example: node dist/main.js --api-port 8080 --agent-port 8081
 * (port 0 picks a free port; the actual URLs are printed on stdout).
 */

import * as http from "node:http";
import * as path from "node:path";
import { CoverageAgent, createAgentServer } from "./coverage";
import type * as MinipetModule from "./minipet";

function argValue(name: string, fallback: number): number {
  const index = process.argv.indexOf(name);
  if (index >= 0 && index + 1 < process.argv.length) {
    return parseInt(process.argv[index + 1], 10);
  }
  return fallback;
}

function listen(server: http.Server, port: number): Promise<number> {
  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, "127.0.0.1", () => {
      const address = server.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no bound address"));
        return;
      }
      resolve(address.port);
    });
  });
}

export interface RunningTarget {
  apiPort: number;
  agentPort: number;
  close(): void;
}

export async function startReferenceTarget(apiPort: number, agentPort: number): Promise<RunningTarget> {
  const handlersModule = path.join(__dirname, "minipet.js");
  const agent = new CoverageAgent("minipet.js", handlersModule);
  await agent.startSession();
  // the handler module is compiled here, under the profiler, so that V8
  // reports per-line coverage for it
  // eslint-disable-next-line @typescript-eslint/no-var-requires
  const minipet = require("./minipet") as typeof MinipetModule;
  await agent.freezeMapping();

  const state = new minipet.MiniPetState();
  const apiServer = minipet.createApiServer(state);
  const agentServer = createAgentServer(agent);
  const boundApi = await listen(apiServer, apiPort);
  const boundAgent = await listen(agentServer, agentPort);
  return {
    apiPort: boundApi,
    agentPort: boundAgent,
    close: () => {
      apiServer.close();
      agentServer.close();
    },
  };
}

async function main(): Promise<void> {
  const target = await startReferenceTarget(argValue("--api-port", 8080), argValue("--agent-port", 8081));
  console.log(
    `minipet api on http://127.0.0.1:${target.apiPort} agent on http://127.0.0.1:${target.agentPort}`
  );
}

if (require.main === module) {
  main().catch((err) => {
    console.error(err);
    process.exit(1);
  });
}
