#pragma once

#include <string>
#include <vector>

#include "fed3d/config.hpp"

namespace fed3d::cli {

// Centrally trains the backbone on the held-out pretext split (prompts
// disabled) and writes <out>/backbone.ckpt plus the resolved config.
int cmd_pretrain(ExperimentConfig cfg);

// Loads the backbone checkpoint, runs the federated experiment, and
// writes metrics.csv, summary.json, final.ckpt, partition.csv and the
// resolved config under the output directory.
int cmd_run(ExperimentConfig cfg);

// Side-by-side comparison of >= 2 summary.json files from the same
// dataset; prints a table and writes compare.csv under out_dir.
int cmd_compare(const std::vector<std::string>& summaries, const std::string& out_dir);

}  // namespace fed3d::cli
