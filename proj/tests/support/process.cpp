#include "support/process.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

extern char** environ;

namespace testsupport {
namespace {

std::filesystem::path fresh_capture_path(const char* suffix) {
    static std::atomic<std::uint64_t> counter{0};
    auto n = counter.fetch_add(1);
    return std::filesystem::temp_directory_path() /
           ("relay-proc-" + std::to_string(::getpid()) + "-" + std::to_string(n) + suffix);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int decode_status(int status) {
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    if (WIFSIGNALED(status)) return -WTERMSIG(status);
    return -1000;
}

// argv and the environment block must be materialized before fork: the child
// may only make async-signal-safe calls until execve.
struct ExecImage {
    std::vector<std::string> args;
    std::vector<std::string> env;
    std::vector<char*> argv;
    std::vector<char*> envp;

    ExecImage(const std::vector<std::string>& argv_in, const EnvVars& extra) : args(argv_in) {
        for (char** e = environ; *e != nullptr; ++e) {
            std::string entry(*e);
            std::string key = entry.substr(0, entry.find('='));
            bool overridden = false;
            for (const auto& [k, v] : extra) overridden = overridden || k == key;
            if (!overridden) env.push_back(std::move(entry));
        }
        for (const auto& [k, v] : extra) env.push_back(k + "=" + v);
        for (auto& a : args) argv.push_back(a.data());
        argv.push_back(nullptr);
        for (auto& e : env) envp.push_back(e.data());
        envp.push_back(nullptr);
    }
};

}  // namespace

ChildProcess::ChildProcess(const std::vector<std::string>& argv, const EnvVars& extra_env)
    : out_path_(fresh_capture_path(".out")), err_path_(fresh_capture_path(".err")) {
    if (argv.empty()) throw std::invalid_argument("empty argv");
    ExecImage image(argv, extra_env);
    pid_ = ::fork();
    if (pid_ < 0) throw std::runtime_error("fork: " + std::string(std::strerror(errno)));
    if (pid_ == 0) {
        int out_fd = ::open(out_path_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        int err_fd = ::open(err_path_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        int null_fd = ::open("/dev/null", O_RDONLY);
        if (out_fd < 0 || err_fd < 0 || null_fd < 0) ::_exit(125);
        ::dup2(null_fd, 0);
        ::dup2(out_fd, 1);
        ::dup2(err_fd, 2);
        ::execve(image.argv[0], image.argv.data(), image.envp.data());
        ::_exit(126);
    }
}

ChildProcess::~ChildProcess() {
    if (!reaped_ && pid_ > 0) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status_, 0);
    }
    std::error_code ec;
    std::filesystem::remove(out_path_, ec);
    std::filesystem::remove(err_path_, ec);
}

bool ChildProcess::running() {
    if (reaped_) return false;
    if (::waitpid(pid_, &status_, WNOHANG) == pid_) reaped_ = true;
    return !reaped_;
}

std::string ChildProcess::out() const { return slurp(out_path_); }
std::string ChildProcess::err() const { return slurp(err_path_); }

void ChildProcess::send_signal(int sig) {
    if (!reaped_ && pid_ > 0) ::kill(pid_, sig);
}

int ChildProcess::wait() {
    if (!reaped_) {
        ::waitpid(pid_, &status_, 0);
        reaped_ = true;
    }
    return decode_status(status_);
}

RunResult run_process(const std::vector<std::string>& argv, const EnvVars& extra_env) {
    ChildProcess child(argv, extra_env);
    RunResult result;
    result.exit_code = child.wait();
    result.out = child.out();
    result.err = child.err();
    return result;
}

}  // namespace testsupport
