#pragma once

namespace grammcmc {

/// Entry point for the gram-mcmc tool. Exit codes: 0 success, 1 config error,
/// 2 runtime budget/exhaustion, 3 verification failure.
int run_cli(int argc, const char* const* argv);

}  // namespace grammcmc
