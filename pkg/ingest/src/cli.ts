#!/usr/bin/env node
// hybridsearch-ingest convert --in <dir> --out <dir>
// hybridsearch-ingest embed --in <dir> --mode {model|pseudo} --dim <n>
//                           --seed <n> --out <dir> [--tensor-dim <n>]
//                           [--max-tokens <n>] [--endpoint <url>]

import fs from "node:fs";
import { pathToFileURL } from "node:url";
import { convertDataset } from "./convert.js";
import { embedDataset, type EmbedOptions } from "./embed.js";
import { DEFAULTS } from "./pseudo.js";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got ${key}`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

function need(flags: Map<string, string>, name: string): string {
  const v = flags.get(name);
  if (v === undefined) throw new Error(`--${name} is required`);
  return v;
}

function intFlag(flags: Map<string, string>, name: string, dflt: number): number {
  const raw = flags.get(name);
  if (raw === undefined) return dflt;
  const v = Number(raw);
  if (!Number.isInteger(v) || v < 0) throw new Error(`--${name}: bad value ${raw}`);
  return v;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "convert") {
      const flags = parseFlags(rest);
      const report = convertDataset(need(flags, "in"), need(flags, "out"));
      console.log(
        `converted ${report.docs} docs, ${report.queries} queries, ` +
          `${report.qrelRows} qrel rows`,
      );
      return 0;
    }
    if (command === "embed") {
      const flags = parseFlags(rest);
      const mode = flags.get("mode") ?? "pseudo";
      if (mode !== "pseudo" && mode !== "model") {
        throw new Error(`--mode must be pseudo or model, got ${mode}`);
      }
      const opts: EmbedOptions = {
        mode,
        seed: intFlag(flags, "seed", 0),
        dim: intFlag(flags, "dim", DEFAULTS.dim),
        tensorDim: intFlag(flags, "tensor-dim", DEFAULTS.tensorDim),
        maxTokens: intFlag(flags, "max-tokens", DEFAULTS.maxTokens),
        endpoint: flags.get("endpoint"),
      };
      const prov = embedDataset(need(flags, "in"), need(flags, "out"), opts);
      console.log(
        `embedded ${prov.counts.docs} docs, ${prov.counts.queries} queries ` +
          `(seed ${opts.seed}, dim ${opts.dim})`,
      );
      return 0;
    }
    console.error("usage: hybridsearch-ingest {convert|embed} --flag value ...");
    return 2;
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

const invokedDirectly = (() => {
  if (process.argv[1] === undefined) return false;
  try {
    // resolve bin symlinks before comparing against this module's URL
    return (
      pathToFileURL(fs.realpathSync(process.argv[1])).href === import.meta.url
    );
  } catch {
    return false;
  }
})();
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
