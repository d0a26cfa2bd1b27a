#!/usr/bin/env node
/**
 * pm-cmp-bot: submit a comparison experiment to a pm-cmp service and fetch
 * the results.
 *
 *   pm-cmp-bot --server http://127.0.0.1:8080 --label run1 \
 *     --measures RMSD,TM-score --mode nn --scale match model*.pdb
 *
 * Exit codes: 0 workflow completed, 1 HTTP/workflow failure, 2 usage error.
 */

import { parseArgs } from "node:util";

import { BotError, runExperiment } from "./bot.js";

const MODES: Record<string, string> = {
  "1n": "first against all",
  nn: "all against all",
  "first against all": "first against all",
  "all against all": "all against all",
};

const SCALES: Record<string, string> = {
  match: "match length",
  total: "total length",
  "match length": "match length",
  "total length": "total length",
};

const USAGE = `usage: pm-cmp-bot --server URL --label L --measures M[,M...] \\
         --mode 1n|nn --scale match|total [--out FILE] \\
         [--poll-interval SECONDS] [--deadline SECONDS] [--retries N] FILES...`;

function fail(message: string): never {
  console.error(message);
  console.error(USAGE);
  process.exit(2);
}

export function parseCli(argv: string[]) {
  const { values, positionals } = parseArgs({
    args: argv,
    allowPositionals: true,
    options: {
      server: { type: "string" },
      label: { type: "string" },
      measures: { type: "string" },
      mode: { type: "string" },
      scale: { type: "string" },
      out: { type: "string" },
      "poll-interval": { type: "string" },
      deadline: { type: "string" },
      retries: { type: "string" },
    },
  });

  for (const required of ["server", "label", "measures", "mode", "scale"] as const) {
    if (!values[required]) {
      fail(`missing --${required}`);
    }
  }
  if (positionals.length === 0) {
    fail("no structure files given");
  }
  const mode = MODES[values.mode!.toLowerCase()];
  if (!mode) {
    fail(`unknown mode ${values.mode}; use 1n or nn`);
  }
  const scale = SCALES[values.scale!.toLowerCase()];
  if (!scale) {
    fail(`unknown scale ${values.scale}; use match or total`);
  }
  const measures = values
    .measures!.split(",")
    .map((m) => m.trim())
    .filter(Boolean);
  if (measures.length === 0) {
    fail("at least one measure is required");
  }

  const seconds = (raw: string | undefined, flag: string): number | undefined => {
    if (raw === undefined) return undefined;
    const value = Number(raw);
    if (!Number.isFinite(value) || value <= 0) {
      fail(`--${flag} must be a positive number of seconds`);
    }
    return value * 1000;
  };

  return {
    server: values.server!,
    label: values.label!,
    measures,
    mode,
    scale,
    files: positionals,
    out: values.out,
    pollIntervalMs: seconds(values["poll-interval"], "poll-interval"),
    deadlineMs: seconds(values.deadline, "deadline"),
    uploadRetries: values.retries ? Number(values.retries) : undefined,
  };
}

async function main(): Promise<number> {
  let options;
  try {
    options = parseCli(process.argv.slice(2));
  } catch (err) {
    fail(String(err instanceof Error ? err.message : err));
  }
  try {
    const result = await runExperiment(options);
    console.log(`${result.status} ${result.outPath}`);
    return 0;
  } catch (err) {
    if (err instanceof BotError) {
      console.error(err.message);
      return 1;
    }
    console.error(String(err));
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
