#pragma once

#include <string>
#include <vector>

namespace mgm {

// Command-line front end.  args excludes the program name.
//
// Subcommands: gen-data, pretrain-mixer, train-agent, evaluate, verify,
// sweep.  Every run is reproducible from its flags plus --seed; the resolved
// configuration is echoed into a JSON next to each produced file (datasets
// carry it in scenario.json, metric reports embed it directly).
//
// When --out is omitted, outputs land under the directory named by the
// MGM_OUT_ROOT environment variable (default: current directory).
//
// The sweep CSV schema is `beta,<mode>,...` with modes in the fixed order
// baseline, combined, alternate and cells formatted mean(std) to three
// decimals; beta rows ascend.
//
// Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 numeric failure
// (non-finite training values, or a verification report above tolerance).
int run_cli(const std::vector<std::string>& args);

}  // namespace mgm
