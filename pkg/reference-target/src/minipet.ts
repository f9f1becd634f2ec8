/**
 * The minipet API: stores and pets with a shared id counter, plus the three
 * deliberately injected bugs the fuzzer is expected to find.
 *
 * B1: renaming a pet with a name longer than 100 bytes crashes the handler.
 * B2: pet creation never verifies the store and store deletion never
 *     cascades, so pets can dangle; reading a dangling pet crashes.
 * B3: a magic voucher value on store reads crashes, guarded by nested
 *     prefix checks (each on its own line, visible to line coverage).
 */

import * as http from "node:http";

interface Store {
  id: string;
  name: string;
}

interface Pet {
  id: string;
  store_id: string;
  name: string;
}

const MAGIC_VOUCHER = "WUPPIE";

export class MiniPetState {
  stores = new Map<string, Store>();
  pets = new Map<string, Pet>();
  nextId = 1;

  issueId(): string {
    const id = this.nextId;
    this.nextId += 1;
    return String(id);
  }

  reset(): void {
    this.stores.clear();
    this.pets.clear();
    this.nextId = 1;
  }
}

type Reply = { status: number; body: unknown };

function parseJson(raw: Buffer): Record<string, unknown> {
  if (raw.length === 0) {
    return {};
  }
  try {
    const doc = JSON.parse(raw.toString("utf8"));
    if (doc !== null && typeof doc === "object" && !Array.isArray(doc)) {
      return doc as Record<string, unknown>;
    }
  } catch {
    // malformed bodies are treated as empty
  }
  return {};
}

function getStore(state: MiniPetState, id: string, voucher: string): Reply {
  if (voucher.startsWith("W")) {
    if (voucher.startsWith("WU")) {
      if (voucher.startsWith("WUP")) {
        if (voucher.startsWith("WUPPI")) {
          if (voucher.length === MAGIC_VOUCHER.length) {
            if (voucher === MAGIC_VOUCHER) {
              return { status: 500, body: { error: "voucher handling crashed" } };
            }
          }
        }
      }
    }
  }
  const store = state.stores.get(id);
  if (store === undefined) {
    return { status: 404, body: { error: "no such store" } };
  }
  return { status: 200, body: { id: store.id, name: store.name } };
}

function putStore(state: MiniPetState, id: string, body: Record<string, unknown>): Reply {
  const store = state.stores.get(id);
  if (store === undefined) {
    return { status: 404, body: { error: "no such store" } };
  }
  if (typeof body.name === "string") {
    store.name = body.name;
  }
  return { status: 200, body: { id: store.id } };
}

function deleteStore(state: MiniPetState, id: string): Reply {
  if (!state.stores.has(id)) {
    return { status: 404, body: { error: "no such store" } };
  }
  state.stores.delete(id);
  return { status: 200, body: {} };
}

function postPet(state: MiniPetState, body: Record<string, unknown>): Reply {
  const storeId = body.store_id;
  if (typeof storeId !== "string" || storeId.length === 0) {
    return { status: 422, body: { error: "store_id required" } };
  }
  const id = state.issueId();
  const name = typeof body.name === "string" ? body.name : "";
  state.pets.set(id, { id, store_id: storeId, name });
  return { status: 201, body: { id } };
}

function getPet(state: MiniPetState, id: string): Reply {
  const pet = state.pets.get(id);
  if (pet === undefined) {
    return { status: 404, body: { error: "no such pet" } };
  }
  if (!state.stores.has(pet.store_id)) {
    return { status: 500, body: { error: "pet store lookup crashed" } };
  }
  return { status: 200, body: { id: pet.id, store_id: pet.store_id, name: pet.name } };
}

function putPet(state: MiniPetState, id: string, body: Record<string, unknown>): Reply {
  const pet = state.pets.get(id);
  if (pet === undefined) {
    return { status: 404, body: { error: "no such pet" } };
  }
  if (typeof body.name === "string") {
    if (Buffer.byteLength(body.name, "utf8") > 100) {
      return { status: 500, body: { error: "name buffer overflow" } };
    }
    pet.name = body.name;
  }
  return { status: 200, body: { id: pet.id } };
}

function deletePet(state: MiniPetState, id: string): Reply {
  if (!state.pets.has(id)) {
    return { status: 404, body: { error: "no such pet" } };
  }
  state.pets.delete(id);
  return { status: 200, body: {} };
}

export function route(state: MiniPetState, method: string, target: string, raw: Buffer): Reply {
  const url = new URL(target, "http://minipet");
  const path = decodeURIComponent(url.pathname);
  if (path === "/store" && method === "POST") {
    const id = state.issueId();
    state.stores.set(id, { id, name: "" });
    return { status: 201, body: { id } };
  }
  if (path === "/pet" && method === "POST") {
    return postPet(state, parseJson(raw));
  }
  const match = /^\/(store|pet)\/([^/]+)$/.exec(path);
  if (match !== null) {
    const id = match[2];
    if (match[1] === "store") {
      if (method === "GET") {
        return getStore(state, id, url.searchParams.get("voucher") ?? "");
      }
      if (method === "PUT") {
        return putStore(state, id, parseJson(raw));
      }
      if (method === "DELETE") {
        return deleteStore(state, id);
      }
      return { status: 405, body: { error: "method not allowed" } };
    }
    if (method === "GET") {
      return getPet(state, id);
    }
    if (method === "PUT") {
      return putPet(state, id, parseJson(raw));
    }
    if (method === "DELETE") {
      return deletePet(state, id);
    }
    return { status: 405, body: { error: "method not allowed" } };
  }
  if (path === "/store" || path === "/pet") {
    return { status: 405, body: { error: "method not allowed" } };
  }
  return { status: 404, body: { error: "no such path" } };
}

export function createApiServer(state: MiniPetState): http.Server {
  return http.createServer((req, res) => {
    const chunks: Buffer[] = [];
    req.on("data", (chunk) => chunks.push(chunk));
    req.on("end", () => {
      let reply: Reply;
      try {
        reply = route(state, req.method ?? "GET", req.url ?? "/", Buffer.concat(chunks));
      } catch {
        // malformed targets (bad percent escapes etc); never a 500, those
        // are reserved for the injected bugs
        reply = { status: 400, body: { error: "unparsable request" } };
      }
      const data = JSON.stringify(reply.body);
      res.writeHead(reply.status, {
        "Content-Type": "application/json",
        "Content-Length": Buffer.byteLength(data),
      });
      res.end(data);
    });
  });
}
