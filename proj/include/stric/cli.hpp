#pragma once

#include <iosfwd>

namespace stric::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;     // bad command line or unexpected failure
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Subcommands:
///   synth     --kind K --out FILE [--seed S --length T --noise X --magnitude M]
///   train     --config FILE [--data FILE] --out DIR [--seed S]
///             writes DIR/checkpoint.json and DIR/history.csv
///   decompose --checkpoint FILE --data FILE --out FILE
///   detect    [--checkpoint FILE] --data FILE [--config FILE] --out DIR
///             writes DIR/scores.csv and DIR/detections.json; without a
///             checkpoint the data stream itself is scored
///   evaluate  --scores FILE --detections FILE --data FILE --out FILE
///             (metrics JSON), or --config FILE [--data FILE] --out FILE
///             (ablation table CSV over all variants)
/// Every command accepts --force to overwrite existing outputs.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace stric::cli
