#include <doctest.h>

#include <sstream>

#include "kae/config.hpp"
#include "kae/errors.hpp"

namespace {

kae::ExperimentConfig parse(const std::string& text) {
    std::istringstream is(text);
    return kae::parse_config(is);
}

} // namespace

TEST_CASE("defaults") {
    const kae::ExperimentConfig c;
    CHECK(c.ode.mu == 0.1);
    CHECK(c.ode.amp == -0.1);
    CHECK(c.ode.lam == 10.0);
    CHECK(c.ode.n_steps == 1500);
    CHECK(c.train.variant == kae::Variant::Usvd);
    CHECK(c.train.epochs == 1000);
    CHECK(c.train.batch_size == 16);
    CHECK(c.train.lr == 1e-2);
    CHECK(c.train.weights.b == 1e-2);
    CHECK(c.train.weights.sv == 1e-4);
    CHECK(c.train.wf == 20);
    CHECK(c.train.wb == 20);
    CHECK(c.train.dims.m == 8);
    CHECK(c.horizon == 1000);
    CHECK(c.seeds == 3);
}

TEST_CASE("format and parse round trip") {
    kae::ExperimentConfig c;
    c.ode.x0 = kae::State(0.25, -1.5, 3.0);
    c.ode.dt = 0.05;
    c.train.variant = kae::Variant::Isvd;
    c.train.isvd_refresh = kae::IsvdRefresh::PerEpoch;
    c.train.weights.sv = 3e-7;
    c.train.seed = 123456789012345ull;
    c.train.dims.h = 0;
    c.normalize = false;
    c.out_dir = "results/run 1";
    const auto back = parse(kae::format_config(c));
    CHECK(kae::format_config(back) == kae::format_config(c));
    CHECK(back.ode.x0 == c.ode.x0);
    CHECK(back.train.weights.sv == 3e-7);
    CHECK(back.train.seed == c.train.seed);
    CHECK(back.out_dir == "results/run 1");
    CHECK(kae::format_config(kae::ExperimentConfig{}).find("mu = 0.1\n") != std::string::npos);
}

TEST_CASE("comments, blank lines and partial files") {
    const auto c = parse("# experiment\n\nvariant = ckae   # baseline\n epochs=5\n");
    CHECK(c.train.variant == kae::Variant::Ckae);
    CHECK(c.train.epochs == 5);
    CHECK(c.train.batch_size == 16);
}

TEST_CASE("bad documents name the line") {
    auto message = [](const std::string& text) {
        try {
            parse(text);
        } catch (const kae::ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("epochs = 5\nfoo = 1\n").find("line 2") != std::string::npos);
    CHECK(message("epochs = 5\nfoo = 1\n").find("foo") != std::string::npos);
    CHECK(message("epochs = -1\n").find("line 1") != std::string::npos);
    CHECK(!message("lr = fast\n").empty());
    CHECK(!message("x0 = 1,2\n").empty());
    CHECK(!message("variant = dmd\n").empty());
    CHECK(!message("normalize = maybe\n").empty());
    CHECK(!message("isvd_refresh = round\n").empty());
    CHECK(!message("just text\n").empty());
    CHECK(!message("state_dim = 4\n").empty());
    CHECK(!message("batch_size = 0\n").empty());
    CHECK(!message("w_c = -1\n").empty());
    CHECK_THROWS_AS(kae::load_config("/nonexistent/kae.cfg"), kae::ConfigError);
}
