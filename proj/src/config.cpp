#include "kae/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "kae/errors.hpp"

namespace kae {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

// Shortest representation that round-trips.
std::string num(double d) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, end);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
    Setter set;
    Getter get;
};

// Declaration order is the print order.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        auto ode_real = [&](const char* key, double OdeSpec::*m) {
            t.emplace_back(key, Field{[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                          c.ode.*m = to_double(k, v);
                                      },
                                      [m](const ExperimentConfig& c) { return num(c.ode.*m); }});
        };
        auto train_real = [&](const char* key, double TrainConfig::*m) {
            t.emplace_back(key, Field{[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                          c.train.*m = to_double(k, v);
                                      },
                                      [m](const ExperimentConfig& c) { return num(c.train.*m); }});
        };
        auto weight = [&](const char* key, double LossWeights::*m) {
            t.emplace_back(key, Field{[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                          c.train.weights.*m = to_double(k, v);
                                      },
                                      [m](const ExperimentConfig& c) { return num(c.train.weights.*m); }});
        };
        auto train_size = [&](const char* key, std::size_t TrainConfig::*m) {
            t.emplace_back(key, Field{[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                          c.train.*m = static_cast<std::size_t>(to_uint(k, v));
                                      },
                                      [m](const ExperimentConfig& c) { return std::to_string(c.train.*m); }});
        };
        auto dim = [&](const char* key, int Dims::*m) {
            t.emplace_back(key, Field{[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                          c.train.dims.*m = static_cast<int>(to_uint(k, v));
                                      },
                                      [m](const ExperimentConfig& c) { return std::to_string(c.train.dims.*m); }});
        };

        ode_real("mu", &OdeSpec::mu);
        ode_real("omega", &OdeSpec::omega);
        ode_real("amp", &OdeSpec::amp);
        ode_real("lam", &OdeSpec::lam);
        ode_real("dt", &OdeSpec::dt);
        t.emplace_back("n_steps", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                            c.ode.n_steps = static_cast<std::size_t>(to_uint(k, v));
                                        },
                                        [](const ExperimentConfig& c) { return std::to_string(c.ode.n_steps); }});
        t.emplace_back("x0", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                       std::istringstream ss(v);
                                       std::string part;
                                       int i = 0;
                                       while (std::getline(ss, part, ',')) {
                                           if (i == 3) throw ConfigError("config: 'x0' expects 3 comma-separated numbers");
                                           c.ode.x0(i++) = to_double(k, trim(part));
                                       }
                                       if (i != 3) throw ConfigError("config: 'x0' expects 3 comma-separated numbers");
                                   },
                                   [](const ExperimentConfig& c) {
                                       return num(c.ode.x0(0)) + "," + num(c.ode.x0(1)) + "," + num(c.ode.x0(2));
                                   }});
        t.emplace_back("variant", Field{[](ExperimentConfig& c, const std::string&, const std::string& v) {
                                            c.train.variant = parse_variant(v);
                                        },
                                        [](const ExperimentConfig& c) {
                                            return std::string(variant_name(c.train.variant));
                                        }});
        train_size("epochs", &TrainConfig::epochs);
        train_size("batch_size", &TrainConfig::batch_size);
        train_real("lr", &TrainConfig::lr);
        weight("w_id", &LossWeights::id);
        weight("w_f", &LossWeights::f);
        weight("w_b", &LossWeights::b);
        weight("w_sv", &LossWeights::sv);
        weight("w_c", &LossWeights::c);
        train_size("wf", &TrainConfig::wf);
        train_size("wb", &TrainConfig::wb);
        t.emplace_back("seed", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                         c.train.seed = to_uint(k, v);
                                     },
                                     [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }});
        dim("state_dim", &Dims::n);
        dim("latent_dim", &Dims::m);
        dim("hidden_dim", &Dims::h);
        t.emplace_back("isvd_refresh",
                       Field{[](ExperimentConfig& c, const std::string&, const std::string& v) {
                                 if (v == "step")
                                     c.train.isvd_refresh = IsvdRefresh::PerStep;
                                 else if (v == "epoch")
                                     c.train.isvd_refresh = IsvdRefresh::PerEpoch;
                                 else
                                     throw ConfigError("config: 'isvd_refresh' expects step or epoch, got '" + v + "'");
                             },
                             [](const ExperimentConfig& c) {
                                 return std::string(c.train.isvd_refresh == IsvdRefresh::PerStep ? "step" : "epoch");
                             }});
        train_size("checkpoint_every", &TrainConfig::checkpoint_every);
        t.emplace_back("record_wall_time",
                       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                 c.train.record_wall_time = to_bool(k, v);
                             },
                             [](const ExperimentConfig& c) { return std::string(c.train.record_wall_time ? "true" : "false"); }});
        t.emplace_back("normalize", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                              c.normalize = to_bool(k, v);
                                          },
                                          [](const ExperimentConfig& c) { return std::string(c.normalize ? "true" : "false"); }});
        t.emplace_back("horizon", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                            c.horizon = static_cast<std::size_t>(to_uint(k, v));
                                        },
                                        [](const ExperimentConfig& c) { return std::to_string(c.horizon); }});
        t.emplace_back("seeds", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                          c.seeds = static_cast<std::size_t>(to_uint(k, v));
                                      },
                                      [](const ExperimentConfig& c) { return std::to_string(c.seeds); }});
        t.emplace_back("out_dir", Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
                                        [](const ExperimentConfig& c) { return c.out_dir; }});
        return t;
    }();
    return table;
}

} // namespace

void ExperimentConfig::validate() const {
    ode.validate();
    TrainConfig t = train;
    t.checkpoint_dir = "unused";
    t.validate();
    if (horizon < 1) throw ConfigError("config: horizon must be at least 1");
    if (seeds < 1) throw ConfigError("config: seeds must be at least 1");
    if (train.dims.n != 3) throw ConfigError("config: state_dim must be 3 for the cylinder-wake model");
}

ExperimentConfig parse_config(std::istream& is) {
    ExperimentConfig cfg;
    std::map<std::string, const Field*> index;
    for (const auto& [key, field] : fields()) index.emplace(key, &field);

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string body = trim(line.substr(0, line.find('#')));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        const auto it = index.find(key);
        if (it == index.end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        try {
            it->second->set(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    return parse_config(is);
}

std::string format_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    for (const auto& [key, field] : fields()) os << key << " = " << field.get(cfg) << '\n';
    return os.str();
}

} // namespace kae
