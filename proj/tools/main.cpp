#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "diodeq/cli_commands.hpp"

namespace {

// --config accepts inline JSON or @path-to-file
nlohmann::json parse_config(const std::string& arg) {
    if (arg.empty()) return nlohmann::json::object();
    if (arg.front() == '@') {
        std::ifstream in(arg.substr(1));
        if (!in) {
            std::cerr << "error: cannot open config file " << arg.substr(1) << "\n";
            std::exit(diodeq::cli::kExitInput);
        }
        nlohmann::json j;
        in >> j;
        return j;
    }
    return nlohmann::json::parse(arg);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"I-V-illumination photodiode modelling and parameter extraction"};
    app.require_subcommand(1);
    app.fallthrough();

    diodeq::cli::CommonOptions common;
    app.add_option("--seed", common.seed, "global seed; every internal stream derives from it");
    app.add_option("--out", common.out_dir, "output directory")->capture_default_str();
    app.add_option("--format", common.format, "output format: json|csv|svg")
        ->capture_default_str();

    // stats ------------------------------------------------------------
    auto* stats = app.add_subcommand("stats", "per-column summary statistics of a dataset");
    stats->add_option("--input", common.input, "dataset CSV")->required();

    // train ------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train one regression engine on the shared split");
    std::string model_kind;
    std::string config_arg;
    train->add_option("--input", common.input, "dataset CSV")->required();
    train->add_option("--model", model_kind, "knn|mlp|fig5|gp|qnn")->required();
    train->add_option("--config", config_arg, "hyperparameters as JSON or @file");
    int knn_k = -1;
    double knn_p = -1.0;
    std::size_t train_epochs = 0;
    train->add_option("--k", knn_k, "knn: number of neighbours");
    train->add_option("--p", knn_p, "knn: Minkowski exponent");
    train->add_option("--epochs", train_epochs, "mlp/qnn: training epochs");

    // compare ----------------------------------------------------------
    auto* compare = app.add_subcommand("compare", "tabulate train/test MSE of trained models");
    std::vector<std::string> model_files;
    compare->add_option("--input", common.input, "dataset CSV")->required();
    compare->add_option("models", model_files, "model.json files")->required();

    // physics ----------------------------------------------------------
    auto* physics = app.add_subcommand("physics", "diode parameter and figure-of-merit extraction");
    diodeq::cli::PhysicsInputs pin;
    physics->add_option("--dark", pin.dark_csv, "dark I-V CSV")->required();
    physics->add_option("--light", pin.light_csvs, "illuminated I-V CSVs (repeatable)");
    physics->add_option("--constants", pin.constants_json, "constants JSON file");
    physics->add_option("--transient", pin.transient_csv, "transient trace CSV (time_s,current_A)");
    physics->add_option("--spectrum", pin.spectrum_csv, "absorbance CSV (lambda_nm,absorbance)");

    // wigner -----------------------------------------------------------
    auto* wig = app.add_subcommand("wigner", "phase-space grid of a displaced squeezed state");
    diodeq::cli::WignerRequest wreq;
    wig->add_option("--alpha-re", wreq.alpha_re, "displacement, real part");
    wig->add_option("--alpha-im", wreq.alpha_im, "displacement, imaginary part");
    wig->add_option("--z-r", wreq.z_r, "squeeze magnitude");
    wig->add_option("--z-theta", wreq.z_theta, "squeeze phase");
    wig->add_option("--cutoff", wreq.cutoff, "Fock cutoff")->capture_default_str();
    wig->add_option("--grid-min", wreq.grid_min)->capture_default_str();
    wig->add_option("--grid-max", wreq.grid_max)->capture_default_str();
    wig->add_option("--grid-step", wreq.grid_step)->capture_default_str();
    wig->add_option("--model", wreq.model_file, "trained QNN model.json");
    wig->add_option("--sample", wreq.sample, "\"V,P\" pushed through the model circuit");

    CLI11_PARSE(app, argc, argv);

    try {
        if (stats->parsed()) return diodeq::cli::cmd_stats(common);
        if (train->parsed()) {
            nlohmann::json config = parse_config(config_arg);
            if (knn_k > 0) config["k"] = knn_k;
            if (knn_p > 0) config["p"] = knn_p;
            if (train_epochs > 0) config["epochs"] = train_epochs;
            return diodeq::cli::cmd_train(common, model_kind, config);
        }
        if (compare->parsed()) return diodeq::cli::cmd_compare(common, model_files);
        if (physics->parsed()) return diodeq::cli::cmd_physics(common, pin);
        if (wig->parsed()) return diodeq::cli::cmd_wigner(common, wreq);
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: bad JSON: " << e.what() << "\n";
        return diodeq::cli::kExitInput;
    }
    return diodeq::cli::kExitInput;
}
