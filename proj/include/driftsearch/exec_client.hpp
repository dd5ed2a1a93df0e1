#pragma once

#include <csignal>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "driftsearch/environment.hpp"
#include "driftsearch/errors.hpp"
#include "driftsearch/validation.hpp"

namespace drift {

/// Name of the environment variable holding the executor launch command.
inline constexpr const char* kExecutorCmdEnvVar = "V2_EXECUTOR_CMD";

struct DetectResult {
    std::vector<Runtime> runtime_candidates;
    std::vector<std::string> imports;
};

/// Client side of the out-of-process validator protocol: one JSON request
/// per line on the child's stdin, one JSON response per line on its stdout.
/// The child is restarted once on protocol desync; a second failure raises
/// BackendFailure.
class ExecutorClient {
public:
    explicit ExecutorClient(std::string command) : command_(std::move(command)) {
        if (command_.empty())
            throw BackendFailure(std::string(kExecutorCmdEnvVar) + " is not configured");
        ::signal(SIGPIPE, SIG_IGN);
    }

    static ExecutorClient from_environment() {
        const char* cmd = std::getenv(kExecutorCmdEnvVar);
        return ExecutorClient(cmd ? cmd : "");
    }

    ~ExecutorClient() { stop(); }

    ExecutorClient(const ExecutorClient&) = delete;
    ExecutorClient& operator=(const ExecutorClient&) = delete;
    ExecutorClient(ExecutorClient&& o) noexcept { move_from(o); }
    ExecutorClient& operator=(ExecutorClient&& o) noexcept {
        stop();
        move_from(o);
        return *this;
    }

    DetectResult detect(const std::string& snippet_path) {
        json request{{"op", "detect"}, {"snippet", snippet_path}};
        json response = round_trip(request, /*timeout_seconds=*/30);
        DetectResult out;
        for (const auto& rj : response.at("runtimes")) {
            auto r = parse_runtime(rj.get<std::string>());
            if (!r) throw BackendFailure("detect: unknown runtime in response");
            out.runtime_candidates.push_back(*r);
        }
        if (response.contains("imports"))
            out.imports = response.at("imports").get<std::vector<std::string>>();
        return out;
    }

    ValidationResult validate(const std::string& snippet_path, const EnvironmentSpec& env,
                              int timeout_seconds) {
        json deps = json::array();
        for (const auto& [pkg, v] : env.deps)
            deps.push_back(json::array({pkg, v.raw}));
        json request{{"op", "validate"},
                     {"snippet", snippet_path},
                     {"runtime", env.runtime == Runtime::Level2 ? "2" : "3"},
                     {"deps", deps},
                     {"timeout", timeout_seconds}};
        json response = round_trip(request, timeout_seconds + 30);
        ValidationResult result = validation_result_from_json(response);
        if (!result.check_invariants())
            throw BackendFailure("executor response violates the validation result contract");
        return result;
    }

private:
    void move_from(ExecutorClient& o) {
        command_ = std::move(o.command_);
        pid_ = o.pid_;
        to_child_ = o.to_child_;
        from_child_ = o.from_child_;
        o.pid_ = -1;
        o.to_child_ = o.from_child_ = -1;
    }

    void start() {
        int in_pipe[2], out_pipe[2];
        if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0)
            throw BackendFailure("failed to create executor pipes");
        pid_ = ::fork();
        if (pid_ < 0) throw BackendFailure("failed to fork executor process");
        if (pid_ == 0) {
            ::dup2(in_pipe[0], STDIN_FILENO);
            ::dup2(out_pipe[1], STDOUT_FILENO);
            ::close(in_pipe[0]);
            ::close(in_pipe[1]);
            ::close(out_pipe[0]);
            ::close(out_pipe[1]);
            ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        ::close(in_pipe[0]);
        ::close(out_pipe[1]);
        to_child_ = in_pipe[1];
        from_child_ = out_pipe[0];
        buffer_.clear();
    }

    void stop() {
        if (to_child_ >= 0) ::close(to_child_);
        if (from_child_ >= 0) ::close(from_child_);
        to_child_ = from_child_ = -1;
        if (pid_ > 0) {
            ::kill(pid_, SIGTERM);
            int status = 0;
            ::waitpid(pid_, &status, 0);
        }
        pid_ = -1;
    }

    bool write_line(const std::string& line) {
        std::string payload = line + "\n";
        std::size_t written = 0;
        while (written < payload.size()) {
            ssize_t n = ::write(to_child_, payload.data() + written, payload.size() - written);
            if (n <= 0) return false;
            written += static_cast<std::size_t>(n);
        }
        return true;
    }

    std::optional<std::string> read_line(int timeout_seconds) {
        auto deadline = timeout_seconds * 1000;
        while (true) {
            auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return line;
            }
            struct pollfd pfd{from_child_, POLLIN, 0};
            int ready = ::poll(&pfd, 1, deadline);
            if (ready <= 0) return std::nullopt;
            char chunk[4096];
            ssize_t n = ::read(from_child_, chunk, sizeof chunk);
            if (n <= 0) return std::nullopt;
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    json round_trip(const json& request, int timeout_seconds) {
        for (int attempt = 0; attempt < 2; ++attempt) {
            if (pid_ < 0) start();
            if (!write_line(request.dump())) {
                stop();
                continue;
            }
            auto line = read_line(timeout_seconds);
            if (!line) {
                stop();
                continue;
            }
            json response = json::parse(*line, nullptr, /*allow_exceptions=*/false);
            if (response.is_discarded() || !response.is_object()) {
                stop(); // protocol desync: restart and retry once
                continue;
            }
            return response;
        }
        throw BackendFailure("executor protocol failed after restart: " + command_);
    }

    std::string command_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

} // namespace drift
