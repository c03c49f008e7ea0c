#pragma once

// Training artifacts on disk: a history file with one JSON record per epoch,
// and checkpoint directories holding manifest.json plus one FLT1 tensor file
// per parameter. Both are deterministic byte-for-byte given the same run.

#include "flattenet/param.hpp"

#include <string>
#include <vector>

namespace flattenet {

struct EpochRecord {
    std::int64_t step = 0;
    double lr = 0;
    double loss = 0;
    double metric = 0;
};

std::string history_jsonl(const std::vector<EpochRecord>& history);
void write_history_jsonl(const std::string& path, const std::vector<EpochRecord>& history);
std::vector<EpochRecord> read_history_jsonl(const std::string& path);

void save_checkpoint(const std::string& dir, const std::vector<Param<float>*>& params);
void save_checkpoint(const std::string& dir, const std::vector<Param<double>*>& params);

// Loads values into an already-built parameter list; names, dims and dtype
// must all match the manifest. Throws std::runtime_error otherwise.
void load_checkpoint(const std::string& dir, const std::vector<Param<float>*>& params);
void load_checkpoint(const std::string& dir, const std::vector<Param<double>*>& params);

} // namespace flattenet
