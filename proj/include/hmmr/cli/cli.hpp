#pragma once

#include <ostream>

namespace hmmr::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kValidation = 2, kNumerical = 3 };

// Entry point of the hmmr tool. Subcommands: gen-model, gen-data, train,
// eval, predict, gradcheck, track.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hmmr::cli
