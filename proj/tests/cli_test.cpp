// End-to-end checks of the installed command line: every run shells out to
// the real binary (path injected at compile time) and inspects exit codes,
// streams, and the files left behind.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "oodscope/io.hpp"
#include "support.hpp"

using namespace oodscope;
using Catch::Matchers::ContainsSubstring;
using testsupport::TempDir;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string quoted(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

RunResult run_cli(const std::string& args, const std::filesystem::path& scratch) {
    const auto out_path = scratch / "stdout.txt";
    const auto err_path = scratch / "stderr.txt";
    const std::string cmd = quoted(OOD_SCOPE_BIN) + " " + args + " >" + quoted(out_path) + " 2>" +
                            quoted(err_path);
    const int status = std::system(cmd.c_str());
    RunResult r;
    if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
    r.out = detail::read_file(out_path);
    r.err = detail::read_file(err_path);
    return r;
}

struct Dataset {
    std::filesystem::path train, ind, ood;
    Eigen::MatrixXd train_x, ind_x, ood_x;
    Eigen::VectorXi train_y;
};

// Two Gaussian classes split along column 1; OOD sits far outside both.
Dataset make_dataset(const std::filesystem::path& dir, uint64_t seed, Eigen::Index n_train,
                     Eigen::Index n_test, Eigen::Index d) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.5);
    auto fill = [&](Eigen::Index n, double offset, bool alternate) {
        Eigen::MatrixXd m(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                m(i, j) = g(rng) + (j == 0 ? offset + (alternate && i % 2 ? 2.0 : 0.0) : 0.0);
        return m;
    };

    Dataset ds;
    ds.train_x = fill(n_train, -1.0, true);
    ds.train_y.resize(n_train);
    for (Eigen::Index i = 0; i < n_train; ++i) ds.train_y[i] = static_cast<int>(i % 2);
    ds.ind_x = fill(n_test, -1.0, true);
    ds.ood_x = fill(n_test, 8.0, false);

    save_features_csv(dir / "train.csv", ds.train_x);
    std::vector<int64_t> labels(static_cast<size_t>(n_train));
    for (Eigen::Index i = 0; i < n_train; ++i) labels[static_cast<size_t>(i)] = ds.train_y[i];
    save_labels(dir / "train_labels.txt", labels);
    write_manifest(dir / "train.json", "train.csv", "csv", n_train, d, "train_labels.txt");
    ds.train = dir / "train.json";

    save_features_rawf32(dir / "ind.bin", ds.ind_x);
    write_manifest(dir / "ind.json", "ind.bin", "rawf32", n_test, d);
    ds.ind = dir / "ind.json";
    save_features_rawf32(dir / "ood.bin", ds.ood_x);
    write_manifest(dir / "ood.json", "ood.bin", "rawf32", n_test, d);
    ds.ood = dir / "ood.json";
    return ds;
}

std::filesystem::path fit_model(const Dataset& ds, const std::filesystem::path& dir) {
    const auto model = dir / "model.bin";
    const RunResult r =
        run_cli("fit --train " + quoted(ds.train) + " --out " + quoted(model), dir);
    REQUIRE(r.code == 0);
    return model;
}

}  // namespace

TEST_CASE("help and version exit cleanly") {
    TempDir tmp;
    const RunResult help = run_cli("--help", tmp.path());
    CHECK(help.code == 0);
    CHECK_THAT(help.out, ContainsSubstring("fit") && ContainsSubstring("pmd-sweep") &&
                             ContainsSubstring("simulate"));
    const RunResult version = run_cli("--version", tmp.path());
    CHECK(version.code == 0);
    CHECK_THAT(version.out, ContainsSubstring("ood-scope/1.0.0"));
}

TEST_CASE("bad invocations exit with one") {
    TempDir tmp;
    CHECK(run_cli("", tmp.path()).code == 1);
    CHECK(run_cli("--bogus", tmp.path()).code == 1);
    CHECK(run_cli("fit", tmp.path()).code == 1);
    const RunResult missing = run_cli("score --model does_not_exist.bin --data x.json --out s.csv",
                                      tmp.path());
    CHECK(missing.code == 1);
    CHECK_THAT(missing.err, ContainsSubstring("does_not_exist.bin"));
}

TEST_CASE("fit writes a loadable model and reports its fingerprint") {
    TempDir tmp;
    const Dataset ds = make_dataset(tmp.path(), 101, 60, 20, 4);
    const auto model_path = tmp.path() / "model.bin";
    const RunResult r =
        run_cli("fit --train " + quoted(ds.train) + " --out " + quoted(model_path), tmp.path());
    REQUIRE(r.code == 0);

    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["command"] == "fit");
    CHECK(j["n"] == 60);
    CHECK(j["dim"] == 4);
    CHECK(j["classes"] == 2);

    const ModelData model = load_model(model_path);
    const GaussianSuite local =
        build_suite(FeatureMatrix::with_labels(ds.train_x, ds.train_y));
    CHECK(model.suite.fingerprint == local.fingerprint);
    CHECK(j["model_fingerprint"] == format_hex_u64(local.fingerprint));
    CHECK(model.suite.class_means == local.class_means);
    CHECK(model.creator == "ood-scope/1.0.0");
}

TEST_CASE("fit requires labels") {
    TempDir tmp;
    const Dataset ds = make_dataset(tmp.path(), 102, 40, 10, 3);
    const RunResult r = run_cli("fit --train " + quoted(ds.ind) + " --out " +
                                    quoted(tmp.path() / "m.bin"),
                                tmp.path());
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("requires labels"));
}

TEST_CASE("a singular fit without ridging exits with the numerical code") {
    TempDir tmp;
    // Within-class scatter lives in column 3 only, so the pooled covariance
    // is singular but has positive trace and the escalating ridge can fix it.
    Eigen::MatrixXd flat(4, 3);
    flat << 1, 2, 3, 1, 2, 5, 4, 5, 6, 4, 5, 8;
    save_features_csv(tmp.path() / "flat.csv", flat);
    save_labels(tmp.path() / "flat_labels.txt", {0, 0, 1, 1});
    write_manifest(tmp.path() / "flat.json", "flat.csv", "csv", 4, 3, "flat_labels.txt");

    const RunResult strict = run_cli("fit --train " + quoted(tmp.path() / "flat.json") +
                                         " --out " + quoted(tmp.path() / "m.bin") +
                                         " --ridge-policy none",
                                     tmp.path());
    CHECK(strict.code == 2);
    CHECK_THAT(strict.err, ContainsSubstring("numerical error"));

    const RunResult ridged = run_cli("fit --train " + quoted(tmp.path() / "flat.json") +
                                         " --out " + quoted(tmp.path() / "m.bin"),
                                     tmp.path());
    CHECK(ridged.code == 0);
    CHECK(nlohmann::json::parse(ridged.out)["shared_ridge"].get<double>() > 0.0);
}

TEST_CASE("staged scoring and one-shot eval write identical reports") {
    TempDir tmp;
    const Dataset ds = make_dataset(tmp.path(), 103, 80, 25, 5);
    const auto model = fit_model(ds, tmp.path());

    const auto ind_scores = tmp.path() / "ind.csv";
    const auto ood_scores = tmp.path() / "ood.csv";
    REQUIRE(run_cli("score --model " + quoted(model) + " --data " + quoted(ds.ind) +
                        " --scorer rmd --out " + quoted(ind_scores),
                    tmp.path())
                .code == 0);
    REQUIRE(run_cli("score --model " + quoted(model) + " --data " + quoted(ds.ood) +
                        " --scorer rmd --out " + quoted(ood_scores),
                    tmp.path())
                .code == 0);

    const auto staged = tmp.path() / "staged.json";
    const auto oneshot = tmp.path() / "oneshot.json";
    const RunResult r1 = run_cli("eval --ind " + quoted(ind_scores) + " --ood " +
                                     quoted(ood_scores) + " --out " + quoted(staged),
                                 tmp.path());
    REQUIRE(r1.code == 0);
    const RunResult r2 = run_cli("eval --model " + quoted(model) + " --ind-data " +
                                     quoted(ds.ind) + " --ood-data " + quoted(ds.ood) +
                                     " --scorer rmd --out " + quoted(oneshot),
                                 tmp.path());
    REQUIRE(r2.code == 0);
    CHECK(detail::read_file(staged) == detail::read_file(oneshot));
    CHECK(r1.out == r2.out);

    // The reported auroc matches an in-process evaluation of the same data.
    const GaussianSuite local = build_suite(FeatureMatrix::with_labels(ds.train_x, ds.train_y));
    const double expected =
        auroc(score_rmd(local, FeatureMatrix::unlabeled(ds.ind_x.cast<float>().cast<double>())),
              score_rmd(local, FeatureMatrix::unlabeled(ds.ood_x.cast<float>().cast<double>())));
    CHECK(nlohmann::json::parse(r1.out)["auroc"].get<double>() == expected);
}

TEST_CASE("eval rejects mixed and incomplete modes") {
    TempDir tmp;
    const RunResult mixed =
        run_cli("eval --ind a.csv --model m.bin --ind-data x --ood-data y --scorer md",
                tmp.path());
    CHECK(mixed.code == 1);
    CHECK_THAT(mixed.err, ContainsSubstring("not both"));
    CHECK(run_cli("eval --ind a.csv", tmp.path()).code == 1);
    CHECK(run_cli("eval --model m.bin --scorer md", tmp.path()).code == 1);
    CHECK(run_cli("eval", tmp.path()).code == 1);
}

TEST_CASE("eval reports exact unity for perfectly separated score files") {
    TempDir tmp;
    // Minimal hand-written score files: just the format marker and the rows.
    detail::atomic_write(tmp.path() / "ind.csv",
                         "# ood-scope scores 1\nindex,score\n0,10\n1,11\n2,12\n");
    detail::atomic_write(tmp.path() / "ood.csv",
                         "# ood-scope scores 1\nindex,score\n0,-3\n1,0\n2,1\n");

    const RunResult r = run_cli("eval --ind " + quoted(tmp.path() / "ind.csv") + " --ood " +
                                    quoted(tmp.path() / "ood.csv"),
                                tmp.path());
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["auroc"].get<double>() == 1.0);
    CHECK_THAT(r.err, !ContainsSubstring("warning"));
}

TEST_CASE("eval warns when score files came from different models") {
    TempDir tmp;
    const Dataset a = make_dataset(tmp.path(), 104, 50, 15, 3);
    TempDir tmp2;
    const Dataset b = make_dataset(tmp2.path(), 105, 50, 15, 3);
    const auto model_a = fit_model(a, tmp.path());
    const auto model_b = fit_model(b, tmp2.path());

    const auto sa = tmp.path() / "a.csv";
    const auto sb = tmp.path() / "b.csv";
    REQUIRE(run_cli("score --model " + quoted(model_a) + " --data " + quoted(a.ind) + " --out " +
                        quoted(sa),
                    tmp.path())
                .code == 0);
    REQUIRE(run_cli("score --model " + quoted(model_b) + " --data " + quoted(b.ood) + " --out " +
                        quoted(sb),
                    tmp.path())
                .code == 0);
    const RunResult r = run_cli("eval --ind " + quoted(sa) + " --ood " + quoted(sb), tmp.path());
    CHECK(r.code == 0);
    CHECK_THAT(r.err, ContainsSubstring("different models"));
}

TEST_CASE("pmd with the full head reproduces md scores") {
    TempDir tmp;
    const Dataset ds = make_dataset(tmp.path(), 106, 70, 20, 4);
    const auto model = fit_model(ds, tmp.path());

    const auto md_csv = tmp.path() / "md.csv";
    const auto pmd_csv = tmp.path() / "pmd.csv";
    REQUIRE(run_cli("score --model " + quoted(model) + " --data " + quoted(ds.ind) +
                        " --scorer md --out " + quoted(md_csv),
                    tmp.path())
                .code == 0);
    REQUIRE(run_cli("score --model " + quoted(model) + " --data " + quoted(ds.ind) +
                        " --scorer pmd --pmd-head 4 --out " + quoted(pmd_csv),
                    tmp.path())
                .code == 0);
    const ScoreVector md = load_scores(md_csv);
    const ScoreVector pmd = load_scores(pmd_csv);
    REQUIRE(md.scores.size() == pmd.scores.size());
    for (Eigen::Index i = 0; i < md.scores.size(); ++i)
        CHECK(pmd.scores[i] == Catch::Approx(md.scores[i]).margin(1e-6));

    CHECK(run_cli("score --model " + quoted(model) + " --data " + quoted(ds.ind) +
                      " --scorer pmd --out x.csv",
                  tmp.path())
              .code == 1);
    CHECK(run_cli("score --model " + quoted(model) + " --data " + quoted(ds.ind) +
                      " --scorer pmd --pmd-head 2 --pmd-tail 2 --out x.csv",
                  tmp.path())
              .code == 1);
    CHECK(run_cli("score --model " + quoted(model) + " --data " + quoted(ds.ind) +
                      " --scorer md --pmd-head 2 --out x.csv",
                  tmp.path())
              .code == 1);
}

TEST_CASE("msp scores come straight from logits") {
    TempDir tmp;
    std::mt19937_64 rng(107);
    const Eigen::MatrixXd logits = testsupport::random_matrix(rng, 15, 3, -4.0, 4.0);
    save_features_csv(tmp.path() / "logits.csv", logits);
    write_manifest(tmp.path() / "logits.json", "logits.csv", "csv", 15, 3);

    const auto out = tmp.path() / "msp.csv";
    const RunResult r = run_cli("score-msp --logits " + quoted(tmp.path() / "logits.json") +
                                    " --out " + quoted(out),
                                tmp.path());
    REQUIRE(r.code == 0);
    const ScoreVector scores = load_scores(out);
    const ScoreVector local = score_msp(FeatureMatrix::unlabeled(logits));
    CHECK(scores.scores == local.scores);
    CHECK(scores.scorer == ScorerId::msp);
    for (Eigen::Index i = 0; i < scores.scores.size(); ++i) {
        CHECK(scores.scores[i] >= 1.0 / 3.0);
        CHECK(scores.scores[i] <= 1.0);
    }
}

TEST_CASE("eigen subcommand writes the per-dimension csv") {
    TempDir tmp;
    const Dataset ds = make_dataset(tmp.path(), 108, 60, 18, 5);
    const auto model = fit_model(ds, tmp.path());
    const auto out = tmp.path() / "eigen.csv";
    const RunResult r = run_cli("eigen --model " + quoted(model) + " --ind-data " +
                                    quoted(ds.ind) + " --ood-data " + quoted(ds.ood) + " --out " +
                                    quoted(out),
                                tmp.path());
    REQUIRE(r.code == 0);
    const auto lines = detail::split_lines(detail::read_file(out));
    CHECK(lines.size() == 4 + 5);  // three hash headers, column header, D rows
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["dim"] == 5);
    CHECK(j["suggested_split"].get<int>() >= 1);
    CHECK(j["suggested_split"].get<int>() <= 6);
    CHECK_THAT(lines[2], ContainsSubstring(std::to_string(j["suggested_split"].get<int>())));
}

TEST_CASE("pmd-sweep traces auroc against the cut position") {
    TempDir tmp;
    const Dataset ds = make_dataset(tmp.path(), 109, 60, 18, 4);
    const auto model = fit_model(ds, tmp.path());
    const auto out = tmp.path() / "sweep.csv";
    const RunResult r = run_cli("pmd-sweep --model " + quoted(model) + " --ind-data " +
                                    quoted(ds.ind) + " --ood-data " + quoted(ds.ood) + " --out " +
                                    quoted(out),
                                tmp.path());
    REQUIRE(r.code == 0);
    const auto lines = detail::split_lines(detail::read_file(out));
    REQUIRE(lines.size() == 3 + 4);
    CHECK(lines[2] == "d,auroc_head,auroc_tail");
    CHECK(detail::split_csv(lines.back())[2].empty());  // no tail at d=D

    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["best_head"]["auroc"].get<double>() >= 0.5);
    CHECK(j.contains("best_tail"));

    // The full head keeps every direction, so its auroc is the md auroc.
    const RunResult eval = run_cli("eval --model " + quoted(model) + " --ind-data " +
                                       quoted(ds.ind) + " --ood-data " + quoted(ds.ood) +
                                       " --scorer md",
                                   tmp.path());
    REQUIRE(eval.code == 0);
    const double md_auroc = nlohmann::json::parse(eval.out)["auroc"].get<double>();
    const double head_full = detail::parse_double(detail::split_csv(lines.back())[1], "sweep");
    CHECK(head_full == Catch::Approx(md_auroc).margin(1e-9));
}

TEST_CASE("simulate reproduces byte-identical artifacts for a fixed seed") {
    TempDir tmp;
    detail::atomic_write(tmp.path() / "config.json",
                         R"({"dim": 8, "n_train_per_class": 200, "n_test_per_class": 40})");
    const auto dir1 = tmp.path() / "run1";
    const auto dir2 = tmp.path() / "run2";
    const RunResult r1 = run_cli("simulate --config " + quoted(tmp.path() / "config.json") +
                                     " --out-dir " + quoted(dir1),
                                 tmp.path());
    REQUIRE(r1.code == 0);
    const RunResult r2 = run_cli("simulate --config " + quoted(tmp.path() / "config.json") +
                                     " --out-dir " + quoted(dir2),
                                 tmp.path());
    REQUIRE(r2.code == 0);

    CHECK(detail::read_file(dir1 / "report.json") == detail::read_file(dir2 / "report.json"));
    CHECK(detail::read_file(dir1 / "eigen.csv") == detail::read_file(dir2 / "eigen.csv"));
    CHECK(r1.out == r2.out);

    const auto j = nlohmann::json::parse(r1.out);
    CHECK(j["config"]["dim"] == 8);
    CHECK(j["auroc_md"].get<double>() > 0.5);
    CHECK(j["auroc_rmd"].get<double>() > 0.9);
    CHECK(j["rng_algorithm"] == "mt19937_64/icdf-as241");

    const RunResult bad = run_cli("simulate --config " + quoted(tmp.path() / "config.json") +
                                      " --out-dir " + quoted(tmp.path() / "run3") +
                                      " --bogus-flag",
                                  tmp.path());
    CHECK(bad.code == 1);
}

TEST_CASE("simulate rejects malformed configs") {
    TempDir tmp;
    detail::atomic_write(tmp.path() / "bad.json", R"({"dmi": 8})");
    const RunResult r = run_cli("simulate --config " + quoted(tmp.path() / "bad.json") +
                                    " --out-dir " + quoted(tmp.path() / "out"),
                                tmp.path());
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("unknown key"));
}
