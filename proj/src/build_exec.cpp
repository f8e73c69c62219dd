#include "ecoforge/build_exec.hpp"

#include <fcntl.h>
#include <fmt/core.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "ecoforge/errors.hpp"

namespace ecoforge {

namespace fs = std::filesystem;

ToolchainConfig default_cuda_toolchain() {
  ToolchainConfig tc;
  tc.dialect = Dialect::Cuda;
  tc.invocation = {"nvcc", "{flags}", "{src}", "-o", "{out}"};
  tc.fixed_flags = {"-std=c++14", "-Xcompiler", "-Wall", "-arch=sm_80", "-O3"};
  return tc;
}

ToolchainConfig default_hip_toolchain() {
  ToolchainConfig tc;
  tc.dialect = Dialect::Hip;
  tc.invocation = {"hipcc", "{flags}", "{src}", "-o", "{out}"};
  tc.fixed_flags = {"-std=c++14", "-Wall", "-O3", "--amdgpu-target=gfx908"};
  return tc;
}

std::vector<std::string> expand_invocation(const ToolchainConfig& tc, const fs::path& src,
                                           const fs::path& out) {
  std::vector<std::string> argv;
  for (const auto& tok : tc.invocation) {
    if (tok == "{flags}") {
      argv.insert(argv.end(), tc.fixed_flags.begin(), tc.fixed_flags.end());
    } else if (tok == "{src}") {
      argv.push_back(src.string());
    } else if (tok == "{out}") {
      argv.push_back(out.string());
    } else {
      argv.push_back(tok);
    }
  }
  return argv;
}

std::string_view source_extension(Dialect d) {
  return d == Dialect::Cuda ? ".cu" : ".hip.cpp";
}

std::uint64_t content_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string content_hash_hex(std::string_view text) {
  return fmt::format("{:016x}", content_hash(text));
}

namespace {

// True when `name` resolves to an executable, either directly or via PATH.
bool resolves_to_executable(const std::string& name) {
  if (name.find('/') != std::string::npos) return ::access(name.c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  if (!path) return false;
  std::string dirs(path);
  std::size_t pos = 0;
  while (pos <= dirs.size()) {
    std::size_t colon = dirs.find(':', pos);
    std::size_t end = (colon == std::string::npos) ? dirs.size() : colon;
    std::string dir = dirs.substr(pos, end - pos);
    if (dir.empty()) dir = ".";
    if (::access((dir + "/" + name).c_str(), X_OK) == 0) return true;
    if (colon == std::string::npos) break;
    pos = colon + 1;
  }
  return false;
}

// Appends up to the capture limit, then drops the tail and marks the cut once.
void append_capped(std::string& dest, const char* data, std::size_t len, std::size_t cap,
                   bool& truncated) {
  if (truncated) return;
  if (dest.size() + len <= cap) {
    dest.append(data, len);
    return;
  }
  dest.append(data, cap - dest.size());
  dest.append(kTruncationMarker);
  truncated = true;
}

struct RawExec {
  int exit_code = -1;
  bool timed_out = false;
  std::string out;
  std::string err;
  double wall_s = 0.0;
};

RawExec spawn_and_capture(const std::vector<std::string>& argv, double timeout_s,
                          std::size_t cap) {
  int out_pipe[2];
  int err_pipe[2];
  if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0)
    throw Error(fmt::format("pipe() failed: {}", std::strerror(errno)));

  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  auto start = std::chrono::steady_clock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw Error(fmt::format("fork() failed: {}", std::strerror(errno)));
  if (pid == 0) {
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[0]);
    ::close(err_pipe[1]);
    ::execvp(cargv[0], cargv.data());
    // Only reached when exec itself failed.
    std::fprintf(stderr, "exec failed: %s: %s\n", cargv[0], std::strerror(errno));
    ::_exit(127);
  }

  ::close(out_pipe[1]);
  ::close(err_pipe[1]);

  RawExec r;
  bool out_trunc = false, err_trunc = false;
  std::array<struct pollfd, 2> fds{{{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}}};
  bool out_open = true, err_open = true;
  std::array<char, 8192> buf;

  auto deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(timeout_s));
  while (out_open || err_open) {
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      r.timed_out = true;
      ::kill(pid, SIGKILL);
      break;
    }
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    int wait_ms = static_cast<int>(std::min<long long>(left, 200));
    fds[0].events = out_open ? POLLIN : 0;
    fds[1].events = err_open ? POLLIN : 0;
    int n = ::poll(fds.data(), fds.size(), std::max(wait_ms, 1));
    if (n < 0) {
      if (errno == EINTR) continue;
      ::kill(pid, SIGKILL);
      break;
    }
    auto drain = [&](int idx, int fd, std::string& dest, bool& trunc, bool& open_flag) {
      if (!open_flag) return;
      if (fds[idx].revents & (POLLIN | POLLHUP)) {
        ssize_t got = ::read(fd, buf.data(), buf.size());
        if (got > 0) {
          append_capped(dest, buf.data(), static_cast<std::size_t>(got), cap, trunc);
        } else if (got == 0) {
          open_flag = false;
        } else if (errno != EAGAIN && errno != EINTR) {
          open_flag = false;
        }
      } else if (fds[idx].revents & (POLLERR | POLLNVAL)) {
        open_flag = false;
      }
    };
    drain(0, out_pipe[0], r.out, out_trunc, out_open);
    drain(1, err_pipe[0], r.err, err_trunc, err_open);
  }

  // After a kill the pipes may still hold buffered output; drain without blocking.
  auto slurp = [&](int fd, std::string& dest, bool& trunc) {
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    ssize_t got;
    while ((got = ::read(fd, buf.data(), buf.size())) > 0)
      append_capped(dest, buf.data(), static_cast<std::size_t>(got), cap, trunc);
  };
  slurp(out_pipe[0], r.out, out_trunc);
  slurp(err_pipe[0], r.err, err_trunc);
  ::close(out_pipe[0]);
  ::close(err_pipe[0]);

  int status = 0;
  ::waitpid(pid, &status, 0);
  if (WIFEXITED(status))
    r.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status))
    r.exit_code = 128 + WTERMSIG(status);
  r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::atomic<std::uint64_t> g_scratch_counter{0};

}  // namespace

ExecResult run_command(const std::vector<std::string>& argv, double timeout_s,
                       std::size_t capture_limit_bytes) {
  if (argv.empty()) throw Error("run_command needs a non-empty argv");
  RawExec raw = spawn_and_capture(argv, timeout_s, capture_limit_bytes);
  ExecResult res;
  res.exit_code = raw.exit_code;
  res.stdout_text = std::move(raw.out);
  res.stderr_text = std::move(raw.err);
  res.wall_time_s = raw.wall_s;
  if (raw.timed_out) {
    if (!res.stderr_text.empty() && res.stderr_text.back() != '\n') res.stderr_text += '\n';
    res.stderr_text += "execution timeout";
    res.ok = false;
  } else {
    res.ok = raw.exit_code == 0;
  }
  return res;
}

ExecResult execute(const fs::path& binary, const std::vector<std::string>& args,
                   double timeout_s, std::size_t capture_limit_bytes) {
  std::vector<std::string> argv;
  argv.push_back(binary.string());
  argv.insert(argv.end(), args.begin(), args.end());
  return run_command(argv, timeout_s, capture_limit_bytes);
}

CompileResult compile(const CodeArtifact& code, const ToolchainConfig& tc,
                      const fs::path& workdir) {
  if (tc.invocation.empty()) throw Error("toolchain invocation is empty");
  if (!resolves_to_executable(tc.invocation.front()))
    throw CompilerMissing(fmt::format("compiler not found: {}", tc.invocation.front()));

  std::error_code ec;
  fs::create_directories(workdir, ec);
  if (ec) throw IoError(fmt::format("cannot create workdir {}: {}", workdir.string(), ec.message()));

  // Hash plus counter keeps names unique even for identical texts compiled twice.
  std::uint64_t serial = g_scratch_counter.fetch_add(1);
  std::string stem = fmt::format("candidate-{}-{:04}", content_hash_hex(code.source_text), serial);
  fs::path src = workdir / (stem + std::string(source_extension(code.dialect)));
  fs::path out = workdir / (stem + ".bin");
  {
    std::ofstream f(src, std::ios::binary);
    if (!f) throw IoError(fmt::format("cannot write source file {}", src.string()));
    f << code.source_text;
  }

  RawExec raw = spawn_and_capture(expand_invocation(tc, src, out), tc.compile_timeout_s,
                                  tc.capture_limit_bytes);
  CompileResult res;
  res.diagnostics = raw.out;
  if (!raw.err.empty()) {
    if (!res.diagnostics.empty() && res.diagnostics.back() != '\n') res.diagnostics += '\n';
    res.diagnostics += raw.err;
  }
  if (raw.timed_out) {
    if (!res.diagnostics.empty() && res.diagnostics.back() != '\n') res.diagnostics += '\n';
    res.diagnostics += "compile timeout";
    res.ok = false;
    return res;
  }
  res.ok = raw.exit_code == 0 && fs::exists(out);
  if (res.ok) res.binary_path = out;
  return res;
}

}  // namespace ecoforge
