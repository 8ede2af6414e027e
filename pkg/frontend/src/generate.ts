import * as path from "path";

import { genMiniConv, genRealExportGolden, genTinyDense } from "./fixtures";

function usage(): never {
  console.error(
    "usage: node dist/generate.js [--out DIR] [--seed N] all|tiny_dense|mini_conv\n" +
      "       node dist/generate.js real BUNDLE_DIR OUT_FILE IMAGE..."
  );
  process.exit(64);
}

async function main(): Promise<void> {
  const args = process.argv.slice(2);
  let outDir = path.resolve(__dirname, "..", "..", "fixtures");
  let seed = 1;
  const rest: string[] = [];
  for (let i = 0; i < args.length; i++) {
    if (args[i] === "--out") outDir = path.resolve(args[++i]);
    else if (args[i] === "--seed") seed = parseInt(args[++i], 10);
    else rest.push(args[i]);
  }
  const target = rest[0] ?? "all";

  if (target === "real") {
    if (rest.length < 4) usage();
    const [, bundleDir, outFile, ...images] = rest;
    const m = await genRealExportGolden(bundleDir, images, outFile);
    console.log(`real export goldens: ${m.cases.length} cases -> ${outFile}`);
    return;
  }
  if (target === "all" || target === "tiny_dense") {
    const m = await genTinyDense(outDir, seed);
    console.log(`tiny_dense: ${m.cases.length} golden cases`);
  }
  if (target === "all" || target === "mini_conv") {
    const { nested, flat } = await genMiniConv(outDir, seed);
    console.log(
      `mini_conv: nested ${nested.cases.length} + flat ${flat.cases.length} golden cases`
    );
  }
  if (!["all", "tiny_dense", "mini_conv"].includes(target)) usage();
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
