#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace ezdual::cli {

// Exit-code contract: 0 pass, 1 runtime/solver failure or failed
// verification, 2 inapplicable parameters, 64 config error.
inline constexpr int kExitPass = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInapplicable = 2;
inline constexpr int kExitConfig = 64;

struct CmdOptions {
    std::string config_path;
    std::optional<std::string> out_dir;     // overrides [output] directory
    std::optional<std::uint64_t> seed;      // overrides [mc] seed
    int threads = 1;
};

int cmd_check(const CmdOptions& opts, std::ostream& out);
int cmd_solve(const CmdOptions& opts, std::ostream& out);
int cmd_verify(const CmdOptions& opts, std::ostream& out);
int cmd_transforms(const CmdOptions& opts, std::ostream& out);

}  // namespace ezdual::cli
