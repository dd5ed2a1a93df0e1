// Scripted stand-in for the out-of-process executor: reads one JSON request
// per line and answers per the mode encoded in the snippet path. Used by the
// protocol-client tests only.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <json.hpp>

using json = nlohmann::json;

int main() {
    std::string line;
    while (std::getline(std::cin, line)) {
        json request = json::parse(line, nullptr, false);
        if (request.is_discarded()) {
            std::cout << "{\"status\":\"error\"}" << std::endl;
            continue;
        }
        std::string op = request.value("op", "");
        std::string snippet = request.value("snippet", "");
        auto mode_of = [&](const std::string& key) { return snippet.rfind(key, 0) == 0; };

        if (op == "detect") {
            json response;
            response["runtimes"] = mode_of("mode=py2only") ? json::array({"2"})
                                                           : json::array({"2", "3"});
            response["imports"] = json::array({"requests", "requests.sessions"});
            std::cout << response.dump() << std::endl;
            continue;
        }

        json response;
        response["install_failures"] = json::array();
        if (mode_of("mode=success")) {
            response["status"] = "success";
            response["snippet_line"] = 3;
        } else if (mode_of("mode=echo")) {
            response["status"] = "success";
            response["snippet_line"] = 1;
            json failures = json::array();
            for (const auto& dep : request.at("deps"))
                failures.push_back({{"package", dep.at(0)}, {"message", dep.at(1)}});
            failures.push_back({{"package", "runtime"}, {"message", request.at("runtime")}});
            failures.push_back(
                {{"package", "timeout"},
                 {"message", std::to_string(request.at("timeout").get<int>())}});
            response["install_failures"] = failures;
        } else if (mode_of("mode=import-dep")) {
            response["status"] = "exception";
            response["exception_name"] = "ImportError";
            response["message"] = "cannot import name 'downsample' from 'theano.tensor.signal'";
            response["trace"] = json::array(
                {{{"origin", "snippet"}, {"line", 5}},
                 {{"origin", "dependency"}, {"package", "Lasagne"}, {"line", 6}}});
            response["snippet_line"] = 5;
        } else if (mode_of("mode=attr")) {
            response["status"] = "exception";
            response["exception_name"] = "AttributeError";
            response["message"] = "module 'np' has no attribute 'float'";
            response["trace"] = json::array({{{"origin", "snippet"}, {"line", 2}}});
            response["snippet_line"] = 2;
        } else if (mode_of("mode=type")) {
            response["status"] = "exception";
            response["exception_name"] = "TypeError";
            response["message"] = "f() takes 1 positional arguments but 2 were given";
            response["trace"] = json::array({{{"origin", "snippet"}, {"line", 7}}});
            response["snippet_line"] = 7;
        } else if (mode_of("mode=fnf")) {
            response["status"] = "exception";
            response["exception_name"] = "FileNotFoundError";
            response["message"] = "[Errno 2] No such file or directory: 'data.csv'";
            response["trace"] = json::array({{{"origin", "snippet"}, {"line", 1}},
                                             {{"origin", "filesystem"}, {"line", 1}}});
            response["snippet_line"] = 1;
        } else if (mode_of("mode=timeout")) {
            response["status"] = "timeout";
        } else if (mode_of("mode=invalid")) {
            // violates the contract: an exception with no trace
            response["status"] = "exception";
            response["exception_name"] = "RuntimeError";
        } else if (mode_of("mode=garbage")) {
            std::cout << "%% not json %%" << std::endl;
            continue;
        } else if (mode_of("mode=desync-once:")) {
            std::string flag = snippet.substr(std::string("mode=desync-once:").size());
            std::ifstream probe(flag);
            if (!probe.good()) {
                std::ofstream(flag) << "seen";
                std::cout << "%% desync %%" << std::endl;
                continue;
            }
            response["status"] = "success";
            response["snippet_line"] = 9;
        } else {
            response["status"] = "success";
            response["snippet_line"] = 1;
        }
        std::cout << response.dump() << std::endl;
    }
    return 0;
}
