#!/usr/bin/env node
import { existsSync } from "node:fs";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { ENCODERS } from "./encoders.js";
import { ExportError, exportDataset } from "./export.js";

function runExport(argv: {
  listing: string;
  out: string;
  encoder: string;
  maxSkipFraction: number;
}): void {
  if (!ENCODERS.has(argv.encoder)) {
    const known = [...ENCODERS.keys()].join(", ");
    process.stderr.write(`error: unknown encoder ${argv.encoder}; known: ${known}\n`);
    process.exit(2);
  }
  if (!existsSync(argv.listing)) {
    process.stderr.write(`error: listing not found: ${argv.listing}\n`);
    process.exit(2);
  }
  if (!(argv.maxSkipFraction >= 0 && argv.maxSkipFraction < 1)) {
    process.stderr.write("error: --max-skip-fraction must be in [0, 1)\n");
    process.exit(2);
  }

  try {
    const result = exportDataset({
      listingPath: argv.listing,
      outDir: argv.out,
      encoderId: argv.encoder,
      maxSkipFraction: argv.maxSkipFraction,
      log: (message) => process.stderr.write(message + "\n"),
    });
    process.stdout.write(
      [
        `exported ${result.nSamples} samples to ${result.manifestPath}`,
        `  classes: ${result.nClasses}`,
        `  image tokens: ${result.imageTokensPerRecord} x ${result.dImage} dims`,
        `  text: ${result.textMode}` +
          (result.dText > 0 ? ` (${result.dText} dims)` : "") +
          (result.textDroppedMixed ? " [mixed reports dropped]" : ""),
        `  skipped rows: ${result.skips.length}/${result.attemptedRows}`,
        `  truncated reports: ${result.truncatedReports}`,
        `  blob sha256: ${result.blobSha256}`,
      ].join("\n") + "\n",
    );
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    process.stderr.write(`error: ${message}\n`);
    process.exit(err instanceof ExportError ? 1 : 2);
  }
}

function runEncoders(): void {
  const lines: string[] = [];
  for (const spec of ENCODERS.values()) {
    lines.push(spec.id);
    lines.push(`  ${spec.description}`);
    lines.push(
      `  image: ${spec.nImageTokens} tokens ` +
        `(${spec.gridSide}x${spec.gridSide}${spec.hasClsImage ? " + cls" : ""}), ` +
        `${spec.dImage} dims`,
    );
    lines.push(`  text: up to ${spec.maxTextTokens} tokens, ${spec.dText} dims`);
  }
  process.stdout.write(lines.join("\n") + "\n");
}

void yargs(hideBin(process.argv))
  .scriptName("pidistill-export")
  .command(
    "export",
    "encode a listed image/report corpus into an embedding dataset",
    (cmd) =>
      cmd
        .option("listing", {
          type: "string",
          demandOption: true,
          describe: "tab-separated listing: image, report (may be empty), label, group",
        })
        .option("out", {
          type: "string",
          demandOption: true,
          describe: "output directory for manifest.json and embeddings.bin",
        })
        .option("encoder", {
          type: "string",
          default: "seeded-vit-b16-224",
          describe: "encoder id; see the encoders command",
        })
        .option("max-skip-fraction", {
          type: "number",
          default: 0.01,
          describe: "abort when more than this fraction of rows is skipped",
        }),
    (argv) =>
      runExport({
        listing: argv.listing,
        out: argv.out,
        encoder: argv.encoder,
        maxSkipFraction: argv["max-skip-fraction"],
      }),
  )
  .command("encoders", "list available encoders and their token layouts", {}, () =>
    runEncoders(),
  )
  .demandCommand(1, "specify a command")
  .strict()
  .help()
  .parse();
