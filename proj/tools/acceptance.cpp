// Prints one pass/fail line per acceptance criterion; exits 1 if any fails.
// Usage: acceptance [criterion numbers...]

#include <cstdlib>
#include <iostream>
#include <string>

#include "stokes_green/acceptance.hpp"

int main(int argc, char** argv) {
    sgreen::AcceptanceOptions opt;
    opt.workers = 1;
    for (int i = 1; i < argc; ++i) opt.only.push_back(std::atoi(argv[i]));
    opt.log = &std::cerr;
    const auto results = sgreen::run_acceptance(opt);
    int failed = 0;
    for (const auto& r : results) {
        std::cout << sgreen::to_line(r) << '\n';
        failed += r.pass ? 0 : 1;
    }
    std::cout << (results.size() - failed) << "/" << results.size() << " criteria pass\n";
    return failed == 0 ? 0 : 1;
}
