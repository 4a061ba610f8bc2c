#pragma once

#include <iosfwd>
#include <string>
#include <vector>

// Command-line front end.  Exit codes: 0 success, 1 runtime failure,
// 2 usage error.  Diagnostics go to `err`.
//
//   beamkd gen-synthetic --config CFG --out DIR
//   beamkd ingest        --manifest FILE --out DIR
//   beamkd preprocess    --data DIR --config CFG --out DIR
//   beamkd train         --config CFG --data DIR --role R --stage S --out DIR
//                        [--teacher-checkpoint F] [--cache DIR] [--granularity G]
//                        [--max-epochs N] [--seed N]
//   beamkd evaluate      --checkpoint F --data DIR [--cache DIR] [--split S] [--out FILE]
//   beamkd report        --runs DIR... --out DIR
//
// CFG is a JSON file or a preset name.  --data defaults to $BEAMKD_DATA_ROOT.

namespace beamkd::cli {

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

}  // namespace beamkd::cli
