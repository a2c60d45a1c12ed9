#pragma once

#include "heavyball/solvers.hpp"

#include <filesystem>
#include <iosfwd>

namespace hb {

/// Trace CSV: `# key=value` metadata lines, then the header
/// `k,f,residual,step_norm_sq,grad_norm,beta,gamma,block` and one row per
/// record. `residual` is empty when min f is unknown and `block` is empty for
/// non-stochastic traces. Cyclic traces store per-block values in the
/// step_norm_sq, beta and gamma cells as semicolon-separated lists.
inline constexpr const char* kTraceHeader = "k,f,residual,step_norm_sq,grad_norm,beta,gamma,block";

void write_trace_csv(const IterateTrace& trace, std::ostream& out);
void write_trace_csv(const IterateTrace& trace, const std::filesystem::path& path);
IterateTrace read_trace_csv(std::istream& in);
IterateTrace read_trace_csv(const std::filesystem::path& path);

/// Sidecar `k,dist_sq` with ||x^k - proj(x^k)||^2 per record, so the error
/// bound and the sublinear check can be re-run from disk.
void write_distance_csv(const IterateTrace& trace, std::ostream& out);
void write_distance_csv(const IterateTrace& trace, const std::filesystem::path& path);
/// Fills TraceRecord::dist_sq; rows must match the records' k one to one.
void attach_distance_csv(IterateTrace& trace, std::istream& in);
void attach_distance_csv(IterateTrace& trace, const std::filesystem::path& path);

}  // namespace hb
