#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ezdual/bsde.hpp"
#include "ezdual/market.hpp"
#include "ezdual/preferences.hpp"
#include "ezdual/valuation.hpp"

namespace ezdual {

// Fully validated run configuration. Parsed from a flat text format:
// [section] headers, key = value lines, # comments; unknown keys are
// errors, not warnings, and every parse error carries its line number.
struct RunConfig {
    // [preference]
    double delta = 0.0, gamma = 0.0, psi = 0.0;

    // [model]
    MarketKind kind = MarketKind::Constant;
    int n = 1;
    double horizon = 1.0;
    double w0 = 1.0;
    double x0 = 0.0;
    // constant
    double const_r = 0.0;
    std::vector<double> const_mu;
    std::vector<double> const_sigma;  // row-major n x n
    std::vector<double> rho;
    // heston
    HestonParams heston;
    // kim-omberg
    KimOmbergParams kim_omberg;

    // [solver]
    SolverScheme scheme;

    // [mc]
    int paths = 10000;
    std::uint64_t seed = 1;
    int batches = 20;

    // [output]
    std::string out_dir = ".";
    std::vector<std::string> formats = {"csv", "jsonl"};
    int dump_paths = 0;  // debug path export, first N paths (0 = off)

    EpsteinZinPreference make_preference() const;
    std::unique_ptr<MarketModel> make_model() const;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig parse_config_file(const std::string& path);

}  // namespace ezdual
