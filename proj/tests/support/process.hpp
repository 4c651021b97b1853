#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace testsupport {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

using EnvVars = std::vector<std::pair<std::string, std::string>>;

// A spawned child with both output streams captured to files, for servers
// and signal-delivery tests. The destructor SIGKILLs anything still running.
class ChildProcess {
public:
    explicit ChildProcess(const std::vector<std::string>& argv, const EnvVars& extra_env = {});
    ~ChildProcess();

    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;

    int pid() const { return pid_; }
    bool running();
    // Current contents of the captured streams, readable while running.
    std::string out() const;
    std::string err() const;
    void send_signal(int sig);
    // Blocks until exit. Returns the exit code, or -N for death by signal N.
    int wait();

private:
    int pid_ = -1;
    int status_ = 0;
    bool reaped_ = false;
    std::filesystem::path out_path_;
    std::filesystem::path err_path_;
};

// Runs argv[0] to completion with extra_env overriding inherited variables.
RunResult run_process(const std::vector<std::string>& argv, const EnvVars& extra_env = {});

}  // namespace testsupport
