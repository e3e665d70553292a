#pragma once

#include <filesystem>
#include <ostream>
#include <string>

#include "saft/config.hpp"

namespace saft {

/// Hashes naming each artifact of a run. Every hash covers the config slice
/// that produced the artifact plus the hashes of its inputs, so changing an
/// upstream setting renames everything downstream.
struct ArtifactHashes {
    std::string data;
    std::string bank;
    std::string train;
    std::string attack;
    std::string eval;
    std::string diagonal;
};

ArtifactHashes artifact_hashes(const RunConfig& cfg);

/// Locations inside the run directory `cfg.out`:
///   data-<h>/      train.saftds, test.saftds, manifest.json
///   bank-<h>.json
///   train-<h>/     [pretrained.saftenc, pretrain-log.csv,] epoch-NNN.saftenc, final.saftenc, log.csv, manifest.json
///   attack-<h>/    adversarial.saftds, summary.json
///   eval-<h>.json
///   diagonal-<h>/  report.json, pairs.csv
struct ArtifactPaths {
    std::filesystem::path data;
    std::filesystem::path bank;
    std::filesystem::path train;
    std::filesystem::path attack;
    std::filesystem::path eval;
    std::filesystem::path diagonal;
};

ArtifactPaths artifact_paths(const RunConfig& cfg);

/// Commands. Each reads its inputs from the run directory (DependencyError
/// when one is missing, FormatError when one records a different config
/// hash), writes its artifact atomically and prints progress or a summary
/// table to `out`.
void cmd_gen_data(const RunConfig& cfg, std::ostream& out);
void cmd_gen_bank(const RunConfig& cfg, std::ostream& out);
void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_attack(const RunConfig& cfg, std::ostream& out);
void cmd_eval(const RunConfig& cfg, std::ostream& out);
void cmd_diagonal(const RunConfig& cfg, std::ostream& out);

/// Dispatches on "gen-data", "gen-bank", "train", "attack", "eval" or
/// "diagonal".
void run_command(const std::string& name, const RunConfig& cfg, std::ostream& out);

}  // namespace saft
