#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "textclass/errors.hpp"
#include "textclass/pipeline.hpp"

// Thin shell around pipeline::run: one subcommand per pipeline stage, a
// required --config, and flag overrides for the scalar fields people
// actually vary between runs of the same config.

namespace {

struct Overrides {
    std::string config_path;
    CLI::App* cmd = nullptr;
    CLI::Option *seed = nullptr, *out = nullptr, *data = nullptr, *vocab = nullptr,
                *checkpoint = nullptr, *chunk = nullptr, *combine = nullptr, *steps = nullptr,
                *target = nullptr, *expressions = nullptr, *refine = nullptr,
                *confusion = nullptr;
    uint64_t seed_v = 0;
    std::string out_v, data_v, vocab_v, checkpoint_v, combine_v, target_v, expressions_v,
        confusion_v;
    size_t steps_v = 0;
};

const char* describe(const std::string& sub) {
    if (sub == "train-tokenizer") return "Learn a subword vocabulary from the corpus";
    if (sub == "encode") return "Dump pooled encoder features as CSV";
    if (sub == "train-classifier") return "Logistic head over frozen encoder features";
    if (sub == "finetune-mlm") return "Masked-token fine-tuning of the encoder";
    if (sub == "finetune-task") return "Joint fine-tuning of encoder and head";
    if (sub == "predict") return "Classify documents, optionally in chunks";
    if (sub == "attribute") return "Integrated-gradients token report";
    if (sub == "similarity") return "Label documents by nearest expression";
    if (sub == "topics") return "PCA + DBSCAN + c-TF-IDF topic discovery";
    return "Score predictions or a confusion-matrix fixture";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Config-driven text classification pipelines"};
    app.require_subcommand(1);

    std::vector<Overrides> subs(textclass::pipeline::kSubcommands.size());
    for (size_t i = 0; i < subs.size(); ++i) {
        const std::string& name = textclass::pipeline::kSubcommands[i];
        Overrides& o = subs[i];
        o.cmd = app.add_subcommand(name, describe(name));
        o.cmd->add_option("--config", o.config_path, "JSON pipeline config")
            ->required();
        o.seed = o.cmd->add_option("--seed", o.seed_v, "Override the run seed");
        o.out = o.cmd->add_option("--out", o.out_v, "Override the output directory");
        o.data = o.cmd->add_option("--data", o.data_v, "Override dataset.path");
        o.vocab = o.cmd->add_option("--vocab", o.vocab_v, "Override tokenizer.vocab_path");
        o.checkpoint =
            o.cmd->add_option("--checkpoint", o.checkpoint_v, "Override model.checkpoint");
        if (name == "predict" || name == "evaluate") {
            o.chunk = o.cmd->add_flag("--chunk", "Window long inputs and combine chunks");
            o.combine = o.cmd->add_option("--combine", o.combine_v, "Chunk combiner: or | mean");
        }
        if (name == "attribute") {
            o.steps = o.cmd->add_option("--steps", o.steps_v, "Integration steps");
            o.target = o.cmd->add_option("--target", o.target_v, "Attributed class");
        }
        if (name == "similarity")
            o.expressions =
                o.cmd->add_option("--expressions", o.expressions_v, "Expression mapping file");
        if (name == "topics") o.refine = o.cmd->add_flag("--refine", "Retrain on cluster labels");
        if (name == "evaluate")
            o.confusion =
                o.cmd->add_option("--confusion", o.confusion_v, "Confusion-matrix CSV fixture");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        for (const Overrides& o : subs) {
            if (!o.cmd->parsed()) continue;
            textclass::pipeline::PipelineConfig cfg =
                textclass::pipeline::load_config(o.config_path);
            if (*o.seed) cfg.seed = o.seed_v;
            if (*o.out) cfg.out_dir = o.out_v;
            if (*o.data) cfg.dataset.path = o.data_v;
            if (*o.vocab) cfg.tokenizer.vocab_path = o.vocab_v;
            if (*o.checkpoint) cfg.model.checkpoint = o.checkpoint_v;
            if (o.chunk && *o.chunk) cfg.task.chunk = true;
            if (o.combine && *o.combine) cfg.task.combine = o.combine_v;
            if (o.steps && *o.steps) cfg.task.steps = o.steps_v;
            if (o.target && *o.target) cfg.task.target = o.target_v;
            if (o.expressions && *o.expressions) cfg.task.expressions = o.expressions_v;
            if (o.refine && *o.refine) cfg.task.refine = true;
            if (o.confusion && *o.confusion) cfg.task.confusion = o.confusion_v;
            textclass::pipeline::run(cfg, o.cmd->get_name(), &std::cout);
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return textclass::pipeline::exit_code_for(e);
    }
}
