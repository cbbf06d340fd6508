#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "textclass/train.hpp"
#include "textclass/unsupervised.hpp"

namespace textclass::pipeline {

// Config-driven orchestration behind the command-line tool. One JSON config
// describes a whole run; a subcommand picks which stage to execute. Every
// run validates the config and the existence of its inputs before touching
// the filesystem, then writes its artifacts plus a manifest that pins the
// config hash, seed and library version, so reruns are byte-identical.

inline constexpr const char* kVersion = "1.0.0";

struct DatasetSection {
    std::string path;
    std::string schema = "generic";     // generic | nhtsa | lgpif
    std::string text_column = "text";   // generic layout text column (informational)
    std::string language = "en";        // nhtsa summary language
    std::string label_rule = "column";  // column | bucket_numtotv | none
};

struct TokenizerSection {
    std::string mode = "wordpiece";
    std::string vocab_path;  // empty -> <out_dir>/vocab.txt
    size_t vocab_size = 200;
    size_t T = 64;
    size_t stride = 32;  // chunk window step for predict --chunk
};

struct ModelSection {
    std::string checkpoint;  // load when set, else seeded init; empty for
                             // predict/attribute/evaluate -> <out_dir>/classifier.json
    size_t E = 32;
    size_t H = 4;
    size_t d_K = 8;
    size_t L = 2;
    size_t T_max = 64;
    size_t F = 64;
    bool positional = true;
    std::string pooling;  // cls | mean; empty means cls, but approach B
                          // insists on an explicit choice
    bool exclude_specials = false;
};

struct TrainSection {
    train::TrainConfig config;  // seed is ignored here; the top-level seed rules
    double l2_lambda = 0.0;
    std::string approach = "C";  // B: frozen encoder + logistic head, C: joint
};

struct TaskSection {
    std::string name;  // classify | mlm | attribute | similarity | topics |
                       // evaluate; empty -> implied by the subcommand
    bool chunk = false;
    std::string combine = "mean";  // or | mean
    std::string expressions;       // similarity: "expression<TAB>label" file
    std::string fallback_label;    // similarity: optional fallback class
    double fallback_threshold_pp = 5.0;
    std::string target;  // attribute: class name; empty -> predicted class
    size_t steps = 64;   // integrated-gradients resolution
    unsupervised::TopicParams topics;
    bool refine = false;    // topics: retrain a classifier on cluster labels
    std::string confusion;  // evaluate: confusion-matrix CSV instead of a model run
};

struct PipelineConfig {
    uint64_t seed = 42;
    std::string out_dir = "out";
    DatasetSection dataset;
    TokenizerSection tokenizer;
    ModelSection model;
    TrainSection train;
    TaskSection task;
};

// Strict parse: unknown keys, wrong types and malformed JSON all raise
// ConfigError. Missing keys fall back to the defaults above.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::string& path);  // missing file -> ConfigError

// Fully resolved config (defaults included), keys sorted; the parse of the
// output reproduces the input config exactly.
std::string config_to_json(const PipelineConfig& cfg);

// FNV-1a over config_to_json, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

extern const std::vector<std::string> kSubcommands;

// Field checks plus input-file existence for the given subcommand.
// Throws ConfigError; never writes anything.
void validate(const PipelineConfig& cfg, const std::string& subcommand);

struct RunResult {
    std::vector<std::string> artifacts;  // files written, manifest last
    std::string summary;                 // one-line outcome
};

// validate -> load inputs -> compute -> write artifacts + manifest. An
// invalid config or unreadable input fails before the first write.
RunResult run(const PipelineConfig& cfg, const std::string& subcommand,
              std::ostream* log = nullptr);

// ConfigError -> 1, NumericError -> 3, everything else -> 2.
int exit_code_for(const std::exception& e);

}  // namespace textclass::pipeline
