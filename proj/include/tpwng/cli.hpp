#pragma once

// Command-line front end.
//
//   tpwng gen-data      --config synth.json --out data/
//   tpwng train         --data data/manifest.json --out run/ [ablation flags]
//   tpwng eval          --data data/manifest.json --out run/ [same flags]
//   tpwng pseudo-labels --data data/manifest.json --out run/ [same flags]
//   tpwng export-scores --data data/manifest.json --out run/ [same flags]
//
// Every artifact name carries the config hash, so runs with different
// settings can share one output directory. eval, pseudo-labels and
// export-scores load the parameters written by train for the same settings
// unless --params is given.

namespace tpwng::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

int run(int argc, char** argv);

}  // namespace tpwng::cli
