#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "merlean/errors.hpp"
#include "merlean/util.hpp"

namespace merlean {

struct CommandResult {
  int exit_code = -1;
  bool timed_out = false;
  bool start_failed = false;
  std::string start_error;
  std::string output;  // stdout and stderr interleaved
  std::int64_t duration_ms = 0;
};

// Runs argv in cwd with a hard timeout. The child gets its own process
// group so a timeout kill takes helpers down with it. Exec failures are
// reported through a CLOEXEC pipe and show up as start_failed, which
// callers treat as an environment error rather than a failing build.
inline CommandResult run_command(const std::vector<std::string>& argv,
                                 const std::string& cwd,
                                 std::int64_t timeout_ms) {
  CommandResult result;
  if (argv.empty()) {
    result.start_failed = true;
    result.start_error = "empty command";
    return result;
  }

  int out_pipe[2];
  int err_pipe[2];  // exec-errno channel
  if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0) {
    result.start_failed = true;
    result.start_error = std::strerror(errno);
    return result;
  }
  fcntl(err_pipe[1], F_SETFD, FD_CLOEXEC);

  std::int64_t start = steady_now_ms();
  pid_t pid = fork();
  if (pid < 0) {
    result.start_failed = true;
    result.start_error = std::strerror(errno);
    for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) close(fd);
    return result;
  }

  if (pid == 0) {
    setpgid(0, 0);
    close(out_pipe[0]);
    close(err_pipe[0]);
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(out_pipe[1], STDERR_FILENO);
    close(out_pipe[1]);
    if (!cwd.empty() && chdir(cwd.c_str()) != 0) {
      int e = errno;
      ssize_t n = write(err_pipe[1], &e, sizeof(e));
      (void)n;
      _exit(127);
    }
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    execvp(cargv[0], cargv.data());
    int e = errno;
    ssize_t n = write(err_pipe[1], &e, sizeof(e));
    (void)n;
    _exit(127);
  }

  close(out_pipe[1]);
  close(err_pipe[1]);

  // Drain output until EOF or deadline.
  bool killed = false;
  char buf[4096];
  for (;;) {
    std::int64_t elapsed = steady_now_ms() - start;
    std::int64_t remaining = timeout_ms - elapsed;
    if (!killed && remaining <= 0) {
      kill(-pid, SIGKILL);
      killed = true;
    }
    int wait_ms = killed ? 200 : static_cast<int>(remaining > 200 ? 200 : remaining);
    if (wait_ms < 1) wait_ms = 1;
    struct pollfd pfd{out_pipe[0], POLLIN, 0};
    int pr = poll(&pfd, 1, wait_ms);
    if (pr > 0) {
      ssize_t n = read(out_pipe[0], buf, sizeof(buf));
      if (n > 0) {
        result.output.append(buf, static_cast<std::size_t>(n));
        continue;
      }
      break;  // EOF or error
    }
    if (pr == 0 && killed) break;  // grace poll after the kill came up empty
    if (pr < 0 && errno != EINTR) break;
  }
  close(out_pipe[0]);

  int exec_errno = 0;
  ssize_t en = read(err_pipe[0], &exec_errno, sizeof(exec_errno));
  close(err_pipe[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  result.duration_ms = steady_now_ms() - start;
  result.timed_out = killed;

  if (en == sizeof(exec_errno)) {
    result.start_failed = true;
    result.start_error = std::string(argv[0]) + ": " + std::strerror(exec_errno);
    return result;
  }
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

}  // namespace merlean
