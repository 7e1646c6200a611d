// Thin stdio bridge to the WASM build of Z3.
//
// Protocol: the client writes SMT-LIB commands terminated by a line
//   (echo "::NFTG_DONE::")
// We evaluate the accumulated batch on one persistent context, print
// whatever the solver printed, then print the sentinel ourselves and
// flush.  From the client's point of view this is indistinguishable
// from `z3 -in`, which handles the echo natively.

'use strict';

const SENTINEL = '::NFTG_DONE::';
const SENTINEL_CMD = '(echo "::NFTG_DONE::")';

function loadZ3() {
  try {
    return require('z3-solver');
  } catch (e) {
    return require('/usr/lib/node_modules/z3-solver');
  }
}

(async () => {
  const { init } = loadZ3();
  const { Z3 } = await init();
  const cfg = Z3.mk_config();
  const ctx = Z3.mk_context(cfg);

  const readline = require('readline');
  const rl = readline.createInterface({ input: process.stdin, terminal: false });

  let batch = [];
  let queue = Promise.resolve();

  rl.on('line', (line) => {
    if (line.trim() === SENTINEL_CMD) {
      const script = batch.join('\n');
      batch = [];
      queue = queue.then(async () => {
        let out = '';
        try {
          out = await Z3.eval_smtlib2_string(ctx, script);
        } catch (e) {
          out = `(error "${String(e && e.message ? e.message : e).replace(/"/g, "'")}")`;
        }
        if (out && out.length) {
          process.stdout.write(out.endsWith('\n') ? out : out + '\n');
        }
        process.stdout.write(SENTINEL + '\n');
      });
    } else {
      batch.push(line);
    }
  });

  rl.on('close', () => {
    queue.then(() => process.stdout.write('', () => process.exit(0)));
  });
})().catch((e) => {
  process.stderr.write('smt_shim failed to start: ' + e + '\n');
  process.exit(1);
});
