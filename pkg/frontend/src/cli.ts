#!/usr/bin/env node
/**
 * CLI: extract FSF feature files from labelled image trees.
 *
 *   extract --images <dir> --backbone <id> --out <file.fsf> [--batch N]
 *           [--model-dir <dir>]
 *   list-backbones
 */

import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'
import { listBackbones } from './backbones'
import { extract } from './extractor'

async function main(): Promise<number> {
  const argv = yargs(hideBin(process.argv))
    .command('extract', 'extract features from an image directory', (y) =>
      y
        .option('images', { type: 'string', demandOption: true, describe: 'image root, one subdirectory per class' })
        .option('backbone', { type: 'string', demandOption: true, describe: 'backbone identifier' })
        .option('out', { type: 'string', demandOption: true, describe: 'output FSF path' })
        .option('batch', { type: 'number', default: 16 })
        .option('model-dir', { type: 'string', describe: 'local tfjs model artifacts' }),
    )
    .command('list-backbones', 'print the supported backbone table')
    .demandCommand(1)
    .strict()
    .help()
    .parseSync()

  const command = argv._[0]
  if (command === 'list-backbones') {
    const rows = listBackbones()
    const header = `${'identifier'.padEnd(18)}${'dim'.padStart(6)}${'input'.padStart(7)}${'frozen params'.padStart(15)}`
    console.log(header)
    console.log('-'.repeat(header.length))
    for (const row of rows) {
      const millions = `${(row.frozenParams / 1e6).toFixed(1)}M`
      console.log(
        `${row.id.padEnd(18)}${String(row.dim).padStart(6)}${String(row.inputSize).padStart(7)}${millions.padStart(15)}`,
      )
    }
    return 0
  }

  const summary = await extract({
    imagesDir: argv.images as string,
    backbone: argv.backbone as string,
    outPath: argv.out as string,
    batchSize: argv.batch as number,
    modelDir: argv['model-dir'] as string | undefined,
  })
  console.log(
    `wrote ${summary.records} records (dim ${summary.dim}, ` +
      `${summary.classes.length} classes) for ${summary.backbone} -> ${argv.out}`,
  )
  if (summary.skipped.length > 0) {
    console.log(`skipped ${summary.skipped.length} unreadable image(s)`)
  }
  return 0
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    process.exit(1)
  })
