// ood-scope command line: fit Gaussian models over feature dumps, score and
// evaluate them with the MD/RMD family, and run the synthetic study.
#include "CLI11.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>

#include "oodscope/oodscope.hpp"

namespace {

using namespace oodscope;

constexpr const char* kCreator = "ood-scope/1.0.0";

RidgePolicy policy_from_string(const std::string& s) {
    if (s == "default") return RidgePolicy::standard();
    if (s == "none") return RidgePolicy::none();
    throw InputError("unknown ridge policy '" + s + "' (expected default or none)");
}

ScorerSpec make_scorer_spec(const std::string& scorer, int pmd_head, int pmd_tail) {
    ScorerSpec spec;
    spec.id = scorer_from_string(scorer);
    if (spec.id == ScorerId::msp)
        throw InputError("msp takes logits, not a model; use the score-msp subcommand");
    const bool has_head = pmd_head != 0;
    const bool has_tail = pmd_tail != 0;
    if (spec.id == ScorerId::pmd) {
        if (has_head == has_tail)
            throw InputError("--scorer pmd needs exactly one of --pmd-head or --pmd-tail");
        spec.pmd = has_head ? PmdIndexSet::head(pmd_head) : PmdIndexSet::tail(pmd_tail);
    } else if (has_head || has_tail) {
        throw InputError("--pmd-head/--pmd-tail apply only to --scorer pmd");
    }
    return spec;
}

// Machine-readable report goes to stdout, and to --out when given.
void emit(const nlohmann::ordered_json& report, const std::string& out_path) {
    std::cout << report.dump(2) << "\n";
    if (!out_path.empty()) detail::atomic_write(out_path, report.dump(2) + "\n");
}

struct FitOpts {
    std::string train, out, ridge_policy = "default";
};

void run_fit(const FitOpts& o) {
    LoadedFeatures train = load_features(o.train);
    if (!train.features.labeled())
        throw InputError("fit requires labels; the training manifest declares none");
    GaussianSuite suite = build_suite(train.features, policy_from_string(o.ridge_policy));
    ModelData model{std::move(suite), std::move(train.label_map),
                    static_cast<int64_t>(std::time(nullptr)), kCreator};
    save_model(o.out, model);

    const GaussianSuite& s = model.suite;
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["command"] = "fit";
    j["n"] = train.features.n();
    j["dim"] = s.dim();
    j["classes"] = s.class_count();
    j["shared_ridge"] = s.shared_factor.ridge;
    j["background_ridge"] = s.background_factor.ridge;
    j["model_fingerprint"] = format_hex_u64(s.fingerprint);
    j["out"] = o.out;
    emit(j, "");
    std::cerr << "fit: " << train.features.n() << " samples, dim " << s.dim() << ", "
              << s.class_count() << " classes; ridge " << format_double(s.shared_factor.ridge)
              << " (shared) " << format_double(s.background_factor.ridge)
              << " (background); model -> " << o.out << "\n";
}

struct ScoreOpts {
    std::string model, data, scorer = "md", out;
    int pmd_head = 0, pmd_tail = 0;
};

void run_score(const ScoreOpts& o) {
    const ModelData model = load_model(o.model);
    const LoadedFeatures data = load_features(o.data);
    const ScorerSpec spec = make_scorer_spec(o.scorer, o.pmd_head, o.pmd_tail);
    const ScoreVector scores = score_with(model.suite, data.features, spec);
    save_scores(o.out, scores);

    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["command"] = "score";
    j["scorer"] = to_string(scores.scorer);
    if (scores.pmd) j["pmd"] = scores.pmd->str();
    j["n"] = scores.scores.size();
    j["model_fingerprint"] = format_hex_u64(scores.model_fingerprint);
    j["out"] = o.out;
    emit(j, "");
    std::cerr << "score: " << to_string(scores.scorer) << (scores.pmd ? " " + scores.pmd->str() : "")
              << " over " << scores.scores.size() << " samples -> " << o.out << "\n";
}

struct ScoreMspOpts {
    std::string logits, out;
};

void run_score_msp(const ScoreMspOpts& o) {
    const LoadedFeatures logits = load_features(o.logits);
    const ScoreVector scores = score_msp(logits.features);
    save_scores(o.out, scores);

    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["command"] = "score-msp";
    j["n"] = scores.scores.size();
    j["out"] = o.out;
    emit(j, "");
    std::cerr << "score-msp: " << scores.scores.size() << " samples -> " << o.out << "\n";
}

struct EvalOpts {
    std::string ind, ood;                        // score-file mode
    std::string model, ind_data, ood_data, scorer;  // one-shot mode
    int pmd_head = 0, pmd_tail = 0;
    std::string out;
};

void run_eval(const EvalOpts& o) {
    const bool file_mode = !o.ind.empty() || !o.ood.empty();
    const bool shot_mode = !o.model.empty() || !o.ind_data.empty() || !o.ood_data.empty() ||
                           !o.scorer.empty();
    if (file_mode && shot_mode)
        throw InputError("eval takes either --ind/--ood score files or the one-shot "
                         "--model/--ind-data/--ood-data/--scorer flags, not both");

    EvalReport report;
    if (file_mode) {
        if (o.ind.empty() || o.ood.empty())
            throw InputError("eval score-file mode needs both --ind and --ood");
        report = evaluate_scores(load_scores(o.ind), load_scores(o.ood), &std::cerr);
    } else if (shot_mode) {
        if (o.model.empty() || o.ind_data.empty() || o.ood_data.empty() || o.scorer.empty())
            throw InputError(
                "eval one-shot mode needs --model, --ind-data, --ood-data and --scorer");
        const ModelData model = load_model(o.model);
        const LoadedFeatures ind = load_features(o.ind_data);
        const LoadedFeatures ood = load_features(o.ood_data);
        const ScorerSpec spec = make_scorer_spec(o.scorer, o.pmd_head, o.pmd_tail);
        report = evaluate(model.suite, ind.features, ood.features, spec, &std::cerr);
    } else {
        throw InputError("eval needs either --ind/--ood score files or one-shot flags");
    }

    emit(eval_report_json(report), o.out);
    char line[160];
    std::snprintf(line, sizeof line, "eval: auroc %.6f (scorer=%s, n_ind=%lld, n_ood=%lld)\n",
                  report.auroc, to_string(report.scorer).c_str(),
                  static_cast<long long>(report.n_ind), static_cast<long long>(report.n_ood));
    std::cerr << line;
}

struct EigenOpts {
    std::string model, ind_data, ood_data, out;
};

void run_eigen(const EigenOpts& o) {
    const ModelData model = load_model(o.model);
    const LoadedFeatures ind = load_features(o.ind_data);
    const LoadedFeatures ood = load_features(o.ood_data);
    const EigenReport report = analyze(model.suite, ind.features, ood.features);
    save_eigen_csv(o.out, report, model.suite.fingerprint);

    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["command"] = "eigen";
    j["dim"] = report.dim;
    j["suggested_split"] = report.suggested_split;
    j["model_fingerprint"] = format_hex_u64(model.suite.fingerprint);
    j["out"] = o.out;
    emit(j, "");
    std::cerr << "eigen: " << report.dim << " dimensions, suggested split at d="
              << report.suggested_split << " -> " << o.out << "\n";
}

struct SweepOpts {
    std::string model, ind_data, ood_data, out;
};

void run_sweep(const SweepOpts& o) {
    const ModelData model = load_model(o.model);
    const LoadedFeatures ind = load_features(o.ind_data);
    const LoadedFeatures ood = load_features(o.ood_data);
    const GaussianSuite& suite = model.suite;

    const PmdBasis basis = make_pmd_basis(suite);
    const PmdCurves ind_curves = pmd_curves(suite, ind.features, basis);
    const PmdCurves ood_curves = pmd_curves(suite, ood.features, basis);

    const Eigen::Index dim = suite.dim();
    std::vector<double> head(static_cast<size_t>(dim));
    std::vector<double> tail(static_cast<size_t>(dim - 1));
    for (Eigen::Index d = 0; d < dim; ++d)
        head[static_cast<size_t>(d)] = auroc_values(ind_curves.head.col(d), ood_curves.head.col(d));
    for (Eigen::Index d = 0; d + 1 < dim; ++d)
        tail[static_cast<size_t>(d)] = auroc_values(ind_curves.tail.col(d), ood_curves.tail.col(d));
    save_sweep_csv(o.out, head, tail, suite.fingerprint);

    size_t best_head = 0;
    for (size_t d = 1; d < head.size(); ++d)
        if (head[d] > head[best_head]) best_head = d;
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["command"] = "pmd-sweep";
    j["dim"] = dim;
    j["best_head"] = {{"d", best_head + 1}, {"auroc", head[best_head]}};
    if (!tail.empty()) {
        size_t best_tail = 0;
        for (size_t d = 1; d < tail.size(); ++d)
            if (tail[d] > tail[best_tail]) best_tail = d;
        j["best_tail"] = {{"d", best_tail + 1}, {"auroc", tail[best_tail]}};
    }
    j["model_fingerprint"] = format_hex_u64(suite.fingerprint);
    j["out"] = o.out;
    emit(j, "");
    std::cerr << "pmd-sweep: best head(d=" << best_head + 1 << ") auroc "
              << format_double(head[best_head]) << " -> " << o.out << "\n";
}

struct SimulateOpts {
    std::string config, out_dir;
};

void run_simulate(const SimulateOpts& o) {
    const SimConfig config = o.config.empty() ? SimConfig{} : load_sim_config(o.config);
    const StudyReport report = run_study(config);

    std::filesystem::create_directories(o.out_dir);
    const std::filesystem::path dir(o.out_dir);
    detail::atomic_write(dir / "report.json", study_report_json(report).dump(2) + "\n");
    save_eigen_csv(dir / "eigen.csv", *report.eigen_report, report.model_fingerprint);

    emit(study_report_json(report), "");
    char line[200];
    std::snprintf(line, sizeof line,
                  "simulate: dim %d, auroc_md %.4f, auroc_rmd %.4f; wrote %s and %s\n",
                  config.dim, report.auroc_md(), report.auroc_rmd(),
                  (dir / "report.json").string().c_str(), (dir / "eigen.csv").string().c_str());
    std::cerr << line;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mahalanobis-family out-of-distribution scoring toolkit"};
    app.set_version_flag("--version", std::string(kCreator));
    app.require_subcommand(1);

    FitOpts fit;
    auto* cmd_fit = app.add_subcommand("fit", "Fit class-conditional and background Gaussians");
    cmd_fit->add_option("--train", fit.train, "training dataset manifest (labeled)")->required();
    cmd_fit->add_option("--out", fit.out, "output model file")->required();
    cmd_fit->add_option("--ridge-policy", fit.ridge_policy,
                        "covariance ridge policy: default (escalating) or none");
    cmd_fit->callback([&] { run_fit(fit); });

    ScoreOpts score;
    auto* cmd_score = app.add_subcommand("score", "Score a dataset against a fitted model");
    cmd_score->add_option("--model", score.model, "model file from fit")->required();
    cmd_score->add_option("--data", score.data, "dataset manifest to score")->required();
    cmd_score->add_option("--scorer", score.scorer, "md, rmd, mmd or pmd");
    cmd_score->add_option("--pmd-head", score.pmd_head, "pmd: keep the d leading eigen-dimensions");
    cmd_score->add_option("--pmd-tail", score.pmd_tail, "pmd: keep eigen-dimensions d+1..D");
    cmd_score->add_option("--out", score.out, "output score csv")->required();
    cmd_score->callback([&] { run_score(score); });

    ScoreMspOpts msp;
    auto* cmd_msp = app.add_subcommand("score-msp", "Max-softmax-probability baseline from logits");
    cmd_msp->add_option("--logits", msp.logits, "logits dataset manifest (N x K)")->required();
    cmd_msp->add_option("--out", msp.out, "output score csv")->required();
    cmd_msp->callback([&] { run_score_msp(msp); });

    EvalOpts eval;
    auto* cmd_eval = app.add_subcommand("eval", "AUROC between IND and OOD scores");
    cmd_eval->add_option("--ind", eval.ind, "in-distribution score csv");
    cmd_eval->add_option("--ood", eval.ood, "out-of-distribution score csv");
    cmd_eval->add_option("--model", eval.model, "one-shot: model file");
    cmd_eval->add_option("--ind-data", eval.ind_data, "one-shot: IND dataset manifest");
    cmd_eval->add_option("--ood-data", eval.ood_data, "one-shot: OOD dataset manifest");
    cmd_eval->add_option("--scorer", eval.scorer, "one-shot: md, rmd, mmd or pmd");
    cmd_eval->add_option("--pmd-head", eval.pmd_head, "one-shot pmd head selector");
    cmd_eval->add_option("--pmd-tail", eval.pmd_tail, "one-shot pmd tail selector");
    cmd_eval->add_option("--out", eval.out, "also write the report here");
    cmd_eval->callback([&] { run_eval(eval); });

    EigenOpts eig;
    auto* cmd_eigen = app.add_subcommand("eigen", "Per-eigen-dimension MD/RMD diagnostic csv");
    cmd_eigen->add_option("--model", eig.model, "model file")->required();
    cmd_eigen->add_option("--ind-data", eig.ind_data, "IND dataset manifest")->required();
    cmd_eigen->add_option("--ood-data", eig.ood_data, "OOD dataset manifest")->required();
    cmd_eigen->add_option("--out", eig.out, "output csv")->required();
    cmd_eigen->callback([&] { run_eigen(eig); });

    SweepOpts sweep;
    auto* cmd_sweep = app.add_subcommand("pmd-sweep", "AUROC vs eigen-dimension cut for pmd");
    cmd_sweep->add_option("--model", sweep.model, "model file")->required();
    cmd_sweep->add_option("--ind-data", sweep.ind_data, "IND dataset manifest")->required();
    cmd_sweep->add_option("--ood-data", sweep.ood_data, "OOD dataset manifest")->required();
    cmd_sweep->add_option("--out", sweep.out, "output csv")->required();
    cmd_sweep->callback([&] { run_sweep(sweep); });

    SimulateOpts sim;
    auto* cmd_sim = app.add_subcommand("simulate", "Synthetic high-dimensional failure-mode study");
    cmd_sim->add_option("--config", sim.config, "JSON config (defaults apply for absent keys)");
    cmd_sim->add_option("--out-dir", sim.out_dir, "directory for report.json and eigen.csv")
        ->required();
    cmd_sim->callback([&] { run_simulate(sim); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
