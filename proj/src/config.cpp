#include "ezdual/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace ezdual {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

struct Entry {
    std::string value;
    int line = 0;
    bool consumed = false;
};

class ConfigMap {
public:
    void insert(const std::string& section, const std::string& key,
                const std::string& value, int line) {
        const std::string full = section + "." + key;
        if (entries_.count(full))
            throw ConfigError("duplicate key '" + full + "'", line);
        entries_[full] = Entry{value, line, false};
    }

    bool has(const std::string& full) const { return entries_.count(full) != 0; }

    const Entry* take(const std::string& full) {
        auto it = entries_.find(full);
        if (it == entries_.end()) return nullptr;
        it->second.consumed = true;
        return &it->second;
    }

    double number(const std::string& full, double fallback, bool required = false) {
        const Entry* e = take(full);
        if (!e) {
            if (required) throw ConfigError("missing required key '" + full + "'");
            return fallback;
        }
        try {
            std::size_t pos = 0;
            const double v = std::stod(e->value, &pos);
            if (pos != e->value.size())
                throw ConfigError("trailing characters after number in '" + full + "'",
                                  e->line);
            return v;
        } catch (const ConfigError&) {
            throw;
        } catch (...) {
            throw ConfigError("cannot parse '" + full + "' = '" + e->value +
                                  "' as a number",
                              e->line);
        }
    }

    long integer(const std::string& full, long fallback, bool required = false) {
        const double v = number(full, static_cast<double>(fallback), required);
        const long r = static_cast<long>(v);
        if (static_cast<double>(r) != v) {
            const Entry* e = &entries_[full];
            throw ConfigError("'" + full + "' must be an integer", e->line);
        }
        return r;
    }

    std::string text(const std::string& full, const std::string& fallback,
                     bool required = false) {
        const Entry* e = take(full);
        if (!e) {
            if (required) throw ConfigError("missing required key '" + full + "'");
            return fallback;
        }
        return e->value;
    }

    std::vector<double> numbers(const std::string& full, bool required = false) {
        const Entry* e = take(full);
        if (!e) {
            if (required) throw ConfigError("missing required key '" + full + "'");
            return {};
        }
        std::vector<double> out;
        std::stringstream ss(e->value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty())
                throw ConfigError("empty element in list '" + full + "'", e->line);
            try {
                out.push_back(std::stod(item));
            } catch (...) {
                throw ConfigError("cannot parse list element '" + item + "' in '" +
                                      full + "'",
                                  e->line);
            }
        }
        if (out.empty()) throw ConfigError("empty list '" + full + "'", e->line);
        return out;
    }

    void reject_unconsumed() const {
        for (const auto& [key, e] : entries_)
            if (!e.consumed) throw ConfigError("unknown key '" + key + "'", e.line);
    }

private:
    std::map<std::string, Entry> entries_;
};

ConfigMap tokenize(const std::string& text, const std::string& origin) {
    ConfigMap cm;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::size_t hash = raw.find('#');
        std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ConfigError(origin + ": unterminated section header", line);
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ": empty section name", line);
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ": expected 'key = value'", line);
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ": empty key", line);
        if (section.empty())
            throw ConfigError(origin + ": key '" + key + "' outside any [section]",
                              line);
        cm.insert(section, key, value, line);
    }
    return cm;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

// scalar -> diagonal matrix; n values -> diagonal; n*n values -> row-major
Eigen::MatrixXd to_mat(const std::vector<double>& v, int n, const std::string& key) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    if (static_cast<int>(v.size()) == 1) {
        m.diagonal().setConstant(v[0]);
    } else if (static_cast<int>(v.size()) == n) {
        for (int i = 0; i < n; ++i) m(i, i) = v[i];
    } else if (static_cast<int>(v.size()) == n * n) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) m(i, j) = v[static_cast<std::size_t>(i) * n + j];
    } else {
        throw ConfigError("'" + key + "' must have 1, n, or n*n entries");
    }
    return m;
}

std::vector<double> broadcast(std::vector<double> v, int n, const std::string& key) {
    if (static_cast<int>(v.size()) == n) return v;
    if (v.size() == 1) return std::vector<double>(n, v[0]);
    throw ConfigError("'" + key + "' must have 1 or n entries");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    ConfigMap cm = tokenize(text, origin);
    RunConfig rc;

    rc.delta = cm.number("preference.delta", 0.0, true);
    rc.gamma = cm.number("preference.gamma", 0.0, true);
    rc.psi = cm.number("preference.psi", 0.0, true);

    const std::string kind = cm.text("model.kind", "", true);
    rc.n = static_cast<int>(cm.integer("model.n", 1));
    if (rc.n < 1) throw ConfigError("'model.n' must be >= 1");
    rc.horizon = cm.number("model.horizon", 1.0);
    rc.w0 = cm.number("model.w0", 1.0);

    if (kind == "constant") {
        rc.kind = MarketKind::Constant;
        rc.const_r = cm.number("model.r", 0.0, true);
        rc.const_mu = broadcast(cm.numbers("model.mu", true), rc.n, "model.mu");
        rc.const_sigma = cm.numbers("model.sigma", true);
        rc.rho = broadcast(cm.numbers("model.rho", true), rc.n, "model.rho");
        rc.x0 = cm.number("model.x0", 0.0);
    } else if (kind == "heston") {
        rc.kind = MarketKind::Heston;
        rc.heston.b = cm.number("model.b", 0.0, true);
        rc.heston.ell = cm.number("model.ell", 0.0, true);
        rc.heston.a = cm.number("model.a", 0.0, true);
        rc.heston.r0 = cm.number("model.r0", 0.0);
        rc.heston.r1 = cm.number("model.r1", 0.0);
        rc.heston.lambda =
            to_vec(broadcast(cm.numbers("model.lambda", true), rc.n, "model.lambda"));
        rc.heston.sigma_scale =
            to_mat(cm.numbers("model.sigma_scale", true), rc.n, "model.sigma_scale");
        const std::string shape = cm.text("model.sigma_shape", "sqrt");
        if (shape == "sqrt")
            rc.heston.shape = HestonParams::Shape::Sqrt;
        else if (shape == "inv_sqrt")
            rc.heston.shape = HestonParams::Shape::InvSqrt;
        else
            throw ConfigError("'model.sigma_shape' must be sqrt or inv_sqrt");
        rc.heston.rho = to_vec(broadcast(cm.numbers("model.rho", true), rc.n, "model.rho"));
        rc.heston.x0 = cm.number("model.x0", rc.heston.ell, false);
        rc.x0 = rc.heston.x0;
    } else if (kind == "kim_omberg") {
        rc.kind = MarketKind::KimOmberg;
        rc.kim_omberg.a = cm.number("model.a", 0.0, true);
        rc.kim_omberg.b = cm.number("model.b", 0.0, true);
        rc.kim_omberg.r0 = cm.number("model.r0", 0.0);
        rc.kim_omberg.r1 = cm.number("model.r1", 0.0);
        rc.kim_omberg.lambda0 =
            to_vec(broadcast(cm.numbers("model.lambda0", true), rc.n, "model.lambda0"));
        rc.kim_omberg.lambda1 =
            to_vec(broadcast(cm.numbers("model.lambda1", true), rc.n, "model.lambda1"));
        rc.kim_omberg.sigma =
            to_mat(cm.numbers("model.sigma", true), rc.n, "model.sigma");
        rc.kim_omberg.rho =
            to_vec(broadcast(cm.numbers("model.rho", true), rc.n, "model.rho"));
        rc.kim_omberg.x0 = cm.number("model.x0", 0.0);
        rc.x0 = rc.kim_omberg.x0;
    } else {
        throw ConfigError("'model.kind' must be constant, heston, or kim_omberg");
    }

    rc.scheme.time_steps = static_cast<int>(cm.integer("solver.time_steps", 200));
    rc.scheme.space_nodes = static_cast<int>(cm.integer("solver.space_nodes", 400));
    rc.scheme.fixed_point_tol = cm.number("solver.fixed_point_tol", 1e-10);
    rc.scheme.max_fixed_point_iters =
        static_cast<int>(cm.integer("solver.max_fixed_point_iters", 50));
    rc.scheme.override_model_checks =
        cm.integer("solver.override_model_checks", 0) != 0;
    if (rc.scheme.time_steps < 1) throw ConfigError("'solver.time_steps' must be >= 1");
    if (rc.scheme.space_nodes < 1) throw ConfigError("'solver.space_nodes' must be >= 1");

    rc.paths = static_cast<int>(cm.integer("mc.paths", 10000));
    if (rc.paths < 2) throw ConfigError("'mc.paths' must be >= 2");
    rc.seed = static_cast<std::uint64_t>(cm.integer("mc.seed", 1));
    rc.batches = static_cast<int>(cm.integer("mc.batches", 20));

    rc.out_dir = cm.text("output.directory", ".");
    rc.dump_paths = static_cast<int>(cm.integer("output.dump_paths", 0));
    const std::string fmts = cm.text("output.formats", "csv,jsonl");
    rc.formats.clear();
    std::stringstream ss(fmts);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item != "csv" && item != "jsonl")
            throw ConfigError("'output.formats' entries must be csv or jsonl");
        rc.formats.push_back(item);
    }

    cm.reject_unconsumed();

    if (!(rc.horizon > 0.0)) throw ConfigError("'model.horizon' must be > 0");
    if (!(rc.w0 > 0.0)) throw ConfigError("'model.w0' must be > 0");
    rc.make_preference();  // validates the preference block
    rc.make_model();       // validates the model block
    return rc;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

EpsteinZinPreference RunConfig::make_preference() const {
    return EpsteinZinPreference(delta, gamma, psi);
}

std::unique_ptr<MarketModel> RunConfig::make_model() const {
    switch (kind) {
        case MarketKind::Constant:
            return std::make_unique<ConstantMarket>(
                const_r, to_vec(const_mu), to_mat(const_sigma, n, "model.sigma"),
                to_vec(rho), x0);
        case MarketKind::Heston:
            return std::make_unique<HestonMarket>(heston);
        case MarketKind::KimOmberg:
            return std::make_unique<KimOmbergMarket>(kim_omberg);
    }
    throw ConfigError("invalid model kind");
}

}  // namespace ezdual
