#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <thread>

#include "albench/error.hpp"

extern char** environ;

namespace albench::adapter {

/// Single-quotes `s` for /bin/sh.
inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

/// Child process running `/bin/sh -c command` with piped stdin and stdout;
/// stderr is inherited. Lines are newline-terminated in both directions.
class Process {
 public:
  using Clock = std::chrono::steady_clock;

  explicit Process(const std::string& command) {
    // A dead child must surface as EPIPE, not kill the core.
    ::signal(SIGPIPE, SIG_IGN);
    int in[2], out[2];
    require(::pipe(in) == 0 && ::pipe(out) == 0, ErrorCode::runtime, "pipe: " + std::string(std::strerror(errno)));
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out[1], STDOUT_FILENO);
    for (int fd : {in[0], in[1], out[0], out[1]}) posix_spawn_file_actions_addclose(&actions, fd);
    std::string sh = "/bin/sh", flag = "-c", cmd = command;
    char* argv[] = {sh.data(), flag.data(), cmd.data(), nullptr};
    const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in[0]);
    ::close(out[1]);
    if (rc != 0) {
      ::close(in[1]);
      ::close(out[0]);
      fail(ErrorCode::runtime, "cannot spawn adapter: " + std::string(std::strerror(rc)));
    }
    stdin_ = in[1];
    stdout_ = out[0];
    ::fcntl(stdin_, F_SETFD, FD_CLOEXEC);
    ::fcntl(stdout_, F_SETFD, FD_CLOEXEC);
  }

  Process(const Process&) = delete;
  Process& operator=(const Process&) = delete;

  ~Process() {
    close_stdin();
    if (!wait_for(std::chrono::seconds(2))) kill();
    if (stdout_ >= 0) ::close(stdout_);
  }

  void write_line(const std::string& line) {
    require(stdin_ >= 0, ErrorCode::runtime, "adapter stdin is closed");
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const auto n = ::write(stdin_, data.data() + off, data.size() - off);
      if (n < 0 && errno == EINTR) continue;
      require(n > 0, ErrorCode::runtime, "adapter closed its input: " + std::string(std::strerror(errno)));
      off += static_cast<std::size_t>(n);
    }
  }

  /// Next line from the child; nullopt at end of stream. Throws on timeout.
  std::optional<std::string> read_line(std::optional<std::chrono::milliseconds> timeout) {
    const auto deadline = timeout ? std::optional(Clock::now() + *timeout) : std::nullopt;
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      if (eof_) {
        if (buffer_.empty()) return std::nullopt;
        return std::exchange(buffer_, {});
      }
      int wait_ms = -1;
      if (deadline) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
        if (left <= 0) fail(ErrorCode::runtime, "adapter did not answer within the timeout");
        wait_ms = static_cast<int>(std::min<long long>(left, 1 << 30));
      }
      pollfd pfd{stdout_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, wait_ms);
      if (rc < 0 && errno == EINTR) continue;
      require(rc >= 0, ErrorCode::runtime, "poll: " + std::string(std::strerror(errno)));
      if (rc == 0) continue;
      char chunk[65536];
      const auto n = ::read(stdout_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        eof_ = true;
      } else {
        buffer_.append(chunk, static_cast<std::size_t>(n));
      }
    }
  }

  void close_stdin() {
    if (stdin_ >= 0) ::close(stdin_);
    stdin_ = -1;
  }

  /// True once the child has exited; its status is then available.
  bool wait_for(std::chrono::milliseconds limit) {
    if (status_) return true;
    const auto deadline = Clock::now() + limit;
    for (;;) {
      int st = 0;
      const auto r = ::waitpid(pid_, &st, WNOHANG);
      if (r == pid_) {
        status_ = st;
        return true;
      }
      if (r < 0) {
        status_ = -1;
        return true;
      }
      if (Clock::now() >= deadline) return false;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  void kill() {
    if (status_) return;
    ::kill(pid_, SIGKILL);
    wait_for(std::chrono::seconds(5));
  }

  std::optional<int> exit_status() const { return status_; }
  pid_t pid() const { return pid_; }

 private:
  pid_t pid_ = -1;
  int stdin_ = -1;
  int stdout_ = -1;
  std::string buffer_;
  bool eof_ = false;
  std::optional<int> status_;
};

}  // namespace albench::adapter
