#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecoforge/types.hpp"

namespace ecoforge {

/// How to turn a source file into a binary. The invocation is a token list
/// where {flags}, {src} and {out} expand at compile time.
struct ToolchainConfig {
  Dialect dialect = Dialect::Cuda;
  std::vector<std::string> invocation;   // e.g. {"nvcc", "{flags}", "{src}", "-o", "{out}"}
  std::vector<std::string> fixed_flags;  // identical for source and candidates, never mutated
  double compile_timeout_s = 120.0;
  double exec_timeout_s = 600.0;
  std::size_t capture_limit_bytes = 256 * 1024;
};

/// nvcc with the fixed flag set every candidate is built with.
ToolchainConfig default_cuda_toolchain();
/// hipcc with the fixed flag set every candidate is built with.
ToolchainConfig default_hip_toolchain();

/// Final argv for a compile, with {flags}/{src}/{out} expanded.
std::vector<std::string> expand_invocation(const ToolchainConfig& tc,
                                           const std::filesystem::path& src,
                                           const std::filesystem::path& out);

struct CompileResult {
  bool ok = false;
  std::string diagnostics;  // compiler stdout+stderr, capped
  std::optional<std::filesystem::path> binary_path;  // set iff ok
};

struct ExecResult {
  bool ok = false;  // exit code 0 and no timeout
  int exit_code = -1;
  std::string stdout_text;  // capped, tail-truncated with marker
  std::string stderr_text;
  double wall_time_s = 0.0;
};

/// Marker appended where captured output was cut at the capture limit.
inline constexpr std::string_view kTruncationMarker = "\n[output truncated]\n";

/// Writes the artifact to a fresh uniquely-named file under `workdir` and runs
/// the toolchain on it. Compile failures and timeouts come back as ok=false
/// with diagnostics; a compiler that cannot be found at all throws
/// CompilerMissing (environment problem, not a candidate problem).
CompileResult compile(const CodeArtifact& code, const ToolchainConfig& tc,
                      const std::filesystem::path& workdir);

/// Runs an arbitrary command with output capture and a hard deadline.
/// On timeout the child is killed, ok=false, and "execution timeout" is
/// appended to stderr_text.
ExecResult run_command(const std::vector<std::string>& argv, double timeout_s,
                       std::size_t capture_limit_bytes = 256 * 1024);

/// Runs a compiled binary with the app's arguments.
ExecResult execute(const std::filesystem::path& binary, const std::vector<std::string>& args,
                   double timeout_s, std::size_t capture_limit_bytes = 256 * 1024);

/// FNV-1a 64-bit over the bytes of `text`. Stable across platforms; used to
/// key mock scripts and to name scratch files.
std::uint64_t content_hash(std::string_view text);
std::string content_hash_hex(std::string_view text);

/// Source file extension the toolchain expects for a dialect.
std::string_view source_extension(Dialect d);

}  // namespace ecoforge
