#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <sys/wait.h>

#include "commands.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "hamflow/checkpoint.hpp"
#include "toml.hpp"

using namespace hamflow;
using namespace hamflow::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = HAMFLOW_FIXTURES_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("hamflow-test-cli-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
    return path;
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(HAMFLOW_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmall = R"(
seed = 7
[mixture]
weights = [0.4, 0.6]
means = [-2.0, 2.0]
variances = [1.0, 1.0]
[kind]
name = "diffusion"
[net]
hidden = [8]
[train]
iterations = 20
batch = 64
[hsm]
iterations = 4
batch = 32
diagnostic_interval = 2
n_esm = 256
force_hidden = [8]
velocity_hidden = [8]
[sample]
steps = 4
n = 37
)";

}  // namespace

TEST_CASE("toml: tables, keys and values") {
    const auto doc = parse_toml(R"(# comment
title = "a \"quoted\" \\ string"
lit = 'C:\path'
n = 1_000
neg = -3
x = 2.5e-3
flag = true
[a.b]
c = [1, 2.0,
     3, # trailing comment
]
"quoted key" = { p = 1, q = [true, false] }
dotted.key = 4
[z]
inf_v = -inf
)");
    CHECK(doc["title"] == "a \"quoted\" \\ string");
    CHECK(doc["lit"] == "C:\\path");
    CHECK(doc["n"] == 1000);
    CHECK(doc["neg"] == -3);
    CHECK(doc["x"].get<double>() == 2.5e-3);
    CHECK(doc["flag"] == true);
    CHECK(doc["a"]["b"]["c"].size() == 3);
    CHECK(doc["a"]["b"]["quoted key"]["q"][1] == false);
    CHECK(doc["a"]["b"]["dotted"]["key"] == 4);
    CHECK(doc["z"]["inf_v"].get<double>() == -std::numeric_limits<double>::infinity());
}

TEST_CASE("toml: malformed input reports the line") {
    CHECK_THROWS_AS(parse_toml("a = 1\na = 2\n"), TomlError);
    CHECK_THROWS_AS(parse_toml("[t]\n[t]\n"), TomlError);
    CHECK_THROWS_AS(parse_toml("[[t]]\n"), TomlError);
    CHECK_THROWS_AS(parse_toml("a = 012\n"), TomlError);
    CHECK_THROWS_AS(parse_toml("a = 1__0\n"), TomlError);
    CHECK_THROWS_AS(parse_toml("a = \"open\n"), TomlError);
    CHECK_THROWS_AS(parse_toml("a = [1 2]\n"), TomlError);
    CHECK_THROWS_AS(parse_toml("a = 1 b = 2\n"), TomlError);
    try {
        parse_toml("ok = 1\n\nbad = @\n");
        FAIL("expected a TomlError");
    } catch (const TomlError& e) {
        CHECK(std::string(e.what()).rfind("line 3:", 0) == 0);
    }
}

TEST_CASE("bundled fixtures load") {
    for (const char* name : {"gauss1d", "gmm1d", "osc_gmm1d", "gmm2d", "reflect2d"}) {
        CAPTURE(name);
        const ExperimentConfig cfg = load_config(kFixtures / (std::string(name) + ".toml"));
        CHECK(cfg.name == name);
        CHECK(cfg.out == fs::path("runs") / name);
    }
    const ExperimentConfig osc = load_config(kFixtures / "osc_gmm1d.toml");
    CHECK(osc.alpha_auto);
    CHECK(std::get<OscillationKind>(osc.kind).alpha == natural_alpha(GaussianMixture::bimodal_1d()));
    const ExperimentConfig refl = load_config(kFixtures / "reflect2d.toml");
    CHECK(std::get<ReflectionKind>(refl.kind).box.lo(0) == doctest::Approx(-1.155));
    CHECK(refl.net.hidden == std::vector<int>{128, 128});
}

TEST_CASE("config errors") {
    const fs::path dir = fresh_dir("config");
    const auto expect_error = [&](const std::string& text) {
        CAPTURE(text);
        CHECK_THROWS_AS(load_config(write_file(dir / "c.toml", text)), ConfigError);
    };
    const std::string mix = "[mixture]\nweights = [1.0]\nmeans = [0.0]\nvariances = [1.0]\n";
    expect_error("[mixture]\nweights = [-0.5, 1.5]\nmeans = [0, 1]\nvariances = [1, 1]\n");
    expect_error("[mixture]\nweights = [1.0]\nmeans = [0.0]\n");
    expect_error(mix + "typo = 1\n");
    expect_error(mix + "[train]\nbatchsize = 3\n");
    expect_error(mix + "[kind]\nname = \"warp\"\n");
    expect_error(mix + "[kind]\nalpha = -1.0\n");
    expect_error(mix + "[train]\nbatch = 0\n");
    expect_error(mix + "[sample]\ncheckpoint = \"missing.json\"\n");
    expect_error(mix + "seed = \"x\"\n");
    expect_error("a = \n");
    CHECK_THROWS_AS(load_config(dir / "absent.toml"), ConfigError);
    CHECK_THROWS_AS(load_config(write_file(dir / "c.yaml", mix)), ConfigError);
}

TEST_CASE("TOML and JSON configs resolve to the same hash") {
    const fs::path dir = fresh_dir("json");
    const ExperimentConfig a = load_config(write_file(dir / "small.toml", kSmall));
    const ExperimentConfig b = load_config(write_file(dir / "small.json", parse_toml(kSmall).dump()));
    CHECK(a.hash() == b.hash());
    ExperimentConfig c = a;
    c.out = "elsewhere";
    CHECK(c.hash() == a.hash());
    c.set_seed(8);
    CHECK(c.hash() != a.hash());
    CHECK(c.train.seed == 8);
    CHECK(c.hsm.config.seed == 8);
}

TEST_CASE("csv: shortest round-trip floats and CRLF") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e21, 123456789.125}) CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
    const fs::path dir = fresh_dir("csv");
    CsvWriter w(dir / "t.csv", {"a", "b,c"});
    w.row(std::vector<double>{1.5, -0.25});
    w.row(std::vector<std::string>{"x\"y", "z"});
    w.close();
    CHECK(slurp(dir / "t.csv") == "a,\"b,c\"\r\n1.5,-0.25\r\n\"x\"\"y\",z\r\n");

    Mat m(2, 2);
    m << 0.1, 1.0 / 3.0, -7.0, 1e-17;
    write_matrix_csv(dir / "m.csv", m);
    const CsvTable t = read_numeric_csv(dir / "m.csv");
    CHECK(t.header == std::vector<std::string>{"x0", "x1"});
    CHECK(t.values == m);
    write_file(dir / "bad.csv", "x0\r\n1\r\nfoo\r\n");
    CHECK_THROWS_AS(read_numeric_csv(dir / "bad.csv"), ConfigError);
}

TEST_CASE("train-hvp with zero iterations writes the initial checkpoint") {
    const fs::path dir = fresh_dir("zero");
    const fs::path cfg = write_file(dir / "small.toml", kSmall);
    CHECK(cmd_train_hvp(cfg, {std::nullopt, dir / "run", 0}) == kExitOk);
    CHECK(slurp(dir / "run" / "hvp_loss.csv") == "iteration,loss\r\n");
    const Mlp net = load_checkpoint(dir / "run" / "hvp.json");
    CHECK(net.params().tail(2).isZero());  // output layer starts at zero
    CHECK_THROWS_AS(cmd_train_hvp(cfg, {std::nullopt, dir / "run", -1}), ConfigError);
}

TEST_CASE("commands are deterministic per seed") {
    const fs::path dir = fresh_dir("determinism");
    const fs::path cfg = write_file(dir / "small.toml", kSmall);
    for (const char* run : {"a", "b"}) {
        CHECK(cmd_train_hvp(cfg, {std::nullopt, dir / run, std::nullopt}) == kExitOk);
        CHECK(cmd_train_hsm(cfg, {std::nullopt, dir / run, std::nullopt}) == kExitOk);
        SampleOptions s;
        s.run.out = dir / run;
        CHECK(cmd_sample(cfg, s) == kExitOk);
    }
    for (const char* file : {"hvp.json", "hvp_loss.csv", "force.json", "velocity.json", "hsm_diagnostics.csv", "samples.csv"}) {
        CAPTURE(file);
        CHECK(slurp(dir / "a" / file) == slurp(dir / "b" / file));
    }
    CHECK(cmd_train_hvp(cfg, {std::uint64_t{99}, dir / "c", std::nullopt}) == kExitOk);
    CHECK(slurp(dir / "a" / "hvp.json") != slurp(dir / "c" / "hvp.json"));
    // Timestamps live only in metadata.
    CHECK(slurp(dir / "a" / "hvp_metadata.json").find("\"created\"") != std::string::npos);
    CHECK(slurp(dir / "a" / "hvp.json").find("created") == std::string::npos);
}

TEST_CASE("sample writes n rows and refuses corrupted checkpoints") {
    const fs::path dir = fresh_dir("sample");
    const fs::path cfg = write_file(dir / "small.toml", kSmall);
    SampleOptions oracle;
    oracle.run.out = dir / "o";
    oracle.oracle = true;
    oracle.n = 123;
    CHECK(cmd_sample(cfg, oracle) == kExitOk);
    CHECK(read_numeric_csv(dir / "o" / "samples.csv").values.rows() == 123);

    CHECK(cmd_train_hvp(cfg, {std::nullopt, dir / "t", std::nullopt}) == kExitOk);
    SampleOptions learned;
    learned.run.out = dir / "t";
    CHECK(cmd_sample(cfg, learned) == kExitOk);
    CHECK(read_numeric_csv(dir / "t" / "samples.csv").values.rows() == 37);

    std::string text = slurp(dir / "t" / "hvp.json");
    const auto pos = text.find("\"weight\"");
    const auto digit = text.find_first_of("123456789", pos);
    text[digit] = text[digit] == '9' ? '8' : static_cast<char>(text[digit] + 1);
    write_file(dir / "corrupt.json", text);
    learned.checkpoint = dir / "corrupt.json";
    CHECK_THROWS_AS(cmd_sample(cfg, learned), CheckpointError);
    write_file(dir / "truncated.json", text.substr(0, 40));
    learned.checkpoint = dir / "truncated.json";
    CHECK_THROWS_AS(cmd_sample(cfg, learned), CheckpointError);
}

TEST_CASE("eval compares against fresh mixture draws") {
    const fs::path dir = fresh_dir("eval");
    const fs::path cfg = write_file(dir / "small.toml", kSmall);
    Rng rng(3);
    write_matrix_csv(dir / "true.csv", GaussianMixture::bimodal_1d().sample(rng, 4000));
    write_matrix_csv(dir / "wrong.csv", rng.normal_matrix(4000, 1));
    CHECK(cmd_eval(dir / "true.csv", cfg, {std::nullopt, dir / "a", std::nullopt}) == kExitOk);
    CHECK(cmd_eval(dir / "wrong.csv", cfg, {std::nullopt, dir / "b", std::nullopt}) == kExitOk);
    const auto a = nlohmann::json::parse(slurp(dir / "a" / "metrics.json"));
    const auto b = nlohmann::json::parse(slurp(dir / "b" / "metrics.json"));
    CHECK(a["ratio"].get<double>() < 5.0);
    CHECK(b["ratio"].get<double>() > 100.0);
    CHECK(a["moments"][0]["true_mean"].get<double>() == doctest::Approx(0.4));
    write_matrix_csv(dir / "wide.csv", rng.normal_matrix(10, 2));
    CHECK_THROWS_AS(cmd_eval(dir / "wide.csv", cfg, {std::nullopt, dir / "c", std::nullopt}), ConfigError);
}

TEST_CASE("thread count comes from the environment") {
    ::unsetenv("HAMFLOW_THREADS");
    CHECK(requested_threads() == 1);
    ::setenv("HAMFLOW_THREADS", "3", 1);
    CHECK(requested_threads() == 3);
    for (const char* bad : {"0", "-2", "two", "4x"}) {
        ::setenv("HAMFLOW_THREADS", bad, 1);
        CHECK_THROWS_AS(requested_threads(), ConfigError);
    }
    ::unsetenv("HAMFLOW_THREADS");
}

TEST_CASE("validation report") {
    CHECK(parse_level("fast") == Level::Fast);
    CHECK(parse_level("full") == Level::Full);
    CHECK_THROWS_AS(parse_level("medium"), std::invalid_argument);
    ValidationReport r;
    r.checks.push_back({"a", true, 0.5, "<=", 1.0, 0.1, ""});
    CHECK(r.passed());
    r.checks.push_back({"b", false, std::nan(""), ">=", 1.0, 0.1, "boom"});
    CHECK_FALSE(r.passed());
    const auto j = r.to_json();
    CHECK(j["passed"] == false);
    CHECK(j["checks"][1]["value"].is_null());
    CHECK(j["level"] == "fast");
}

TEST_CASE("exit codes") {
    const fs::path dir = fresh_dir("exit");
    const fs::path cfg = write_file(dir / "small.toml", kSmall);
    const std::string out = " --out " + (dir / "run").string();
    CHECK(run_binary("train-hvp " + cfg.string() + out) == kExitOk);
    CHECK(run_binary("train-hvp " + (dir / "absent.toml").string()) == kExitConfig);
    write_file(dir / "neg.toml", "[mixture]\nweights = [-0.5, 1.5]\nmeans = [0, 1]\nvariances = [1, 1]\n");
    CHECK(run_binary("train-hsm " + (dir / "neg.toml").string()) == kExitConfig);
    CHECK(run_binary("sample " + cfg.string() + out + " --steps 0") == kExitConfig);
    CHECK(run_binary("bogus") == kExitConfig);
    CHECK(run_binary("validate medium") == kExitConfig);

    std::string text = slurp(dir / "run" / "hvp.json");
    text.replace(text.find("\"param_digest\": \"") + 17, 4, "ffff");
    write_file(dir / "bad.json", text);
    CHECK(run_binary("sample " + cfg.string() + out + " --checkpoint " + (dir / "bad.json").string()) == kExitValidation);

    // Exploding learning rate on a tiny net.
    write_file(dir / "boom.toml", std::string(kSmall) + "");
    std::string boom = kSmall;
    boom.replace(boom.find("batch = 64"), 10, "batch = 64\nlr = 1e300");
    write_file(dir / "boom.toml", boom);
    const int rc = run_binary("train-hvp " + (dir / "boom.toml").string() + out);
    CHECK(rc == kExitDiverged);
}
