/**
 * Client for the pm-cmp HTTP interface, automating the whole workflow:
 * set up an experiment, upload every model file, start the computation,
 * poll the status until it finishes and download the results file.
 *
 * Only the upload step retries on failure (it is by far the most
 * I/O-intensive part); every other HTTP error aborts the run.
 */

import { readFile, writeFile } from "node:fs/promises";
import { basename } from "node:path";
import { setTimeout as delay } from "node:timers/promises";

export interface BotOptions {
  /** Base URL of the service, e.g. http://127.0.0.1:8080 */
  server: string;
  label: string;
  /** Measure names in the service vocabulary (RMSD, GDT_TS, TM-score, Q-score). */
  measures: string[];
  /** "first against all" or "all against all". */
  mode: string;
  /** "match length" or "total length". */
  scale: string;
  /** PDB files to upload, in order; the first one is the 1:N target. */
  files: string[];
  /** Where to write the results file; defaults to "<label>.tsv". */
  out?: string;
  /** Milliseconds between status polls (default 2000). */
  pollIntervalMs?: number;
  /** Give up if the experiment is not finished after this long (default 30 min). */
  deadlineMs?: number;
  /** Retries per file upload on I/O failure (default 3). */
  uploadRetries?: number;
  /** Progress sink; defaults to stderr. */
  log?: (line: string) => void;
}

export interface BotResult {
  experimentId: string;
  /** Final status line reported by the service. */
  status: string;
  /** Path of the downloaded results file. */
  outPath: string;
  uploadRetries: number;
}

export class BotError extends Error {
  constructor(
    message: string,
    readonly httpStatus?: number,
  ) {
    super(message);
    this.name = "BotError";
  }
}

const DEFAULT_POLL_MS = 2000;
const DEFAULT_DEADLINE_MS = 30 * 60 * 1000;
const DEFAULT_UPLOAD_RETRIES = 3;
const RETRY_DELAY_MS = 500;

function join(server: string, path: string): string {
  return new URL(path, server).toString();
}

async function errorBody(response: Response): Promise<string> {
  try {
    return (await response.text()).trim();
  } catch {
    return "";
  }
}

async function expectOk(response: Response, what: string): Promise<Response> {
  if (!response.ok) {
    const body = await errorBody(response);
    throw new BotError(
      `${what} failed: HTTP ${response.status}${body ? ` (${body})` : ""}`,
      response.status,
    );
  }
  return response;
}

/** POST the experiment options; the service answers 303 with the upload path. */
async function setupExperiment(opts: BotOptions): Promise<string> {
  const form = new URLSearchParams();
  form.set("label", opts.label);
  for (const measure of opts.measures) {
    form.append("measures", measure);
  }
  form.set("mode", opts.mode);
  form.set("scale", opts.scale);

  const response = await fetch(join(opts.server, "/experiments/setup"), {
    method: "POST",
    body: form,
    redirect: "manual",
  });
  if (response.status !== 303) {
    const body = await errorBody(response);
    throw new BotError(
      `setup failed: expected 303, got HTTP ${response.status}` +
        (body ? ` (${body})` : ""),
      response.status,
    );
  }
  const location = response.headers.get("location");
  if (!location) {
    throw new BotError("setup failed: 303 response carried no Location header");
  }
  const id = location.replace(/\/+$/, "").split("/").pop();
  if (!id) {
    throw new BotError(`setup failed: cannot take an id from ${location}`);
  }
  return id;
}

/** Upload one file, retrying I/O failures and server-side 5xx responses. */
async function uploadFile(
  opts: BotOptions,
  experimentId: string,
  path: string,
  retries: number,
  log: (line: string) => void,
): Promise<number> {
  const bytes = await readFile(path);
  const url = join(opts.server, `/experiments/structures/${experimentId}`);
  let retried = 0;
  for (let attempt = 0; ; attempt++) {
    try {
      const form = new FormData();
      form.append("file", new Blob([bytes]), basename(path));
      const response = await fetch(url, { method: "POST", body: form });
      if (response.ok) {
        return retried;
      }
      const body = await errorBody(response);
      if (response.status < 500 || attempt >= retries) {
        throw new BotError(
          `upload of ${path} failed: HTTP ${response.status}` +
            (body ? ` (${body})` : ""),
          response.status,
        );
      }
      log(`upload of ${path} got HTTP ${response.status}; retrying`);
    } catch (err) {
      if (err instanceof BotError) {
        throw err;
      }
      if (attempt >= retries) {
        throw new BotError(`upload of ${path} failed: ${String(err)}`);
      }
      log(`upload of ${path} failed (${String(err)}); retrying`);
    }
    retried++;
    await delay(RETRY_DELAY_MS);
  }
}

async function pollUntilFinished(
  opts: BotOptions,
  experimentId: string,
  log: (line: string) => void,
): Promise<string> {
  const pollMs = opts.pollIntervalMs ?? DEFAULT_POLL_MS;
  const deadline = Date.now() + (opts.deadlineMs ?? DEFAULT_DEADLINE_MS);
  const url = join(opts.server, `/experiments/status/${experimentId}`);
  let lastStatus = "";
  for (;;) {
    const response = await expectOk(await fetch(url), "status poll");
    const status = (await response.text()).trim();
    if (status !== lastStatus) {
      log(`status: ${status}`);
      lastStatus = status;
    }
    if (status.startsWith("finished")) {
      return status;
    }
    if (Date.now() > deadline) {
      throw new BotError(
        `experiment ${experimentId} still "${status}" past the deadline`,
      );
    }
    await delay(pollMs);
  }
}

async function downloadResults(
  opts: BotOptions,
  experimentId: string,
): Promise<Buffer> {
  const url = join(opts.server, `/experiments/download/${experimentId}`);
  const response = await expectOk(await fetch(url), "download");
  return Buffer.from(await response.arrayBuffer());
}

export async function runExperiment(opts: BotOptions): Promise<BotResult> {
  const log = opts.log ?? ((line: string) => console.error(line));
  const retries = opts.uploadRetries ?? DEFAULT_UPLOAD_RETRIES;
  if (opts.files.length === 0) {
    throw new BotError("no files to upload");
  }

  const experimentId = await setupExperiment(opts);
  log(`experiment ${experimentId} created`);

  let uploadRetries = 0;
  for (const [index, file] of opts.files.entries()) {
    uploadRetries += await uploadFile(opts, experimentId, file, retries, log);
    log(`uploaded ${index + 1}/${opts.files.length}: ${file}`);
  }

  await expectOk(
    await fetch(join(opts.server, `/experiments/start/${experimentId}`)),
    "start",
  );
  log("computation started");

  const status = await pollUntilFinished(opts, experimentId, log);

  const results = await downloadResults(opts, experimentId);
  const outPath = opts.out ?? `${opts.label}.tsv`;
  await writeFile(outPath, results);
  log(`results written to ${outPath} (${results.length} bytes)`);

  return { experimentId, status, outPath, uploadRetries };
}
