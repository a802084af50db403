/**
 * Boots a curation service for the browser-flow test.
 *
 * When CURATION_BASE_URL is set (the Python acceptance gate exports it,
 * pointing at the service it already runs), that service is used as-is.
 * Standalone `npm test` builds its own throwaway workspace from the toy
 * fixture, runs the whole pipeline once, and serves it on an ephemeral
 * port; teardown kills the server and removes the workspace.
 */

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { cpSync, mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

declare module "vitest" {
  export interface ProvidedContext {
    baseUrl: string;
    workspace: string;
    flowTopic: string;
  }
}

export default async function setup({ provide }: { provide: (key: string, value: string) => void }) {
  let baseUrl = process.env.CURATION_BASE_URL ?? "";
  let workspace = process.env.CURATION_WORKSPACE ?? "";
  let child: ChildProcess | null = null;
  let ownWorkspace = "";

  if (!baseUrl) {
    const here = dirname(fileURLToPath(import.meta.url));
    const toy = join(here, "..", "..", "tests", "fixtures", "toy");
    ownWorkspace = mkdtempSync(join(tmpdir(), "curation-ui-"));
    cpSync(toy, ownWorkspace, { recursive: true });
    const config = join(ownWorkspace, "pipeline.json");
    execFileSync("newsloom", ["all", "--config", config], { stdio: "inherit", timeout: 900_000 });
    child = spawn("newsloom", ["serve", "--config", config, "--port", "0"], {
      stdio: ["ignore", "pipe", "inherit"],
    });
    baseUrl = await new Promise<string>((resolve, reject) => {
      let buffer = "";
      const timer = setTimeout(() => reject(new Error("service did not announce its port within 60s")), 60_000);
      child!.stdout!.on("data", (chunk) => {
        buffer += String(chunk);
        const match = buffer.match(/listening on (http:\/\/[^/\s]+)\//);
        if (match) {
          clearTimeout(timer);
          resolve(match[1]);
        }
      });
      child!.on("exit", (code) => {
        clearTimeout(timer);
        reject(new Error(`service exited before announcing its port (code ${code})`));
      });
    });
    workspace = ownWorkspace;
  }

  provide("baseUrl", baseUrl);
  provide("workspace", workspace);
  provide("flowTopic", process.env.CURATION_FLOW_TOPIC ?? "");

  return () => {
    if (child) child.kill();
    if (ownWorkspace) rmSync(ownWorkspace, { recursive: true, force: true });
  };
}
