// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. With no arguments every criterion runs; otherwise each argument
// names one check (see `styleddg verify --list`).

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "styleddg/checks.hpp"

using namespace styleddg;

int main(int argc, char** argv) {
    int threads = 2;
    if (const char* env = std::getenv("STYLEDDG_THREADS")) threads = std::atoi(env);

    std::vector<std::string> names;
    for (int i = 1; i < argc; ++i) names.emplace_back(argv[i]);
    if (names.empty()) names = checks::check_names();

    bool all = true;
    for (const auto& n : names) {
        checks::CheckResult r;
        try {
            r = checks::run_check(n, threads);
        } catch (const std::exception& e) {
            r.name = n;
            r.pass = false;
            r.details = std::string("exception: ") + e.what();
        }
        std::cout << checks::format_line(r, true) << std::endl;
        all = all && r.pass;
    }
    return all ? 0 : 1;
}
