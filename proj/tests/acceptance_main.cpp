// Acceptance gate: runs every criterion at its stated tolerance and prints
// one pass/fail line each. Exit status is nonzero when any criterion fails.

#include <cstdio>

#include "acceptance/acceptance.hpp"

int main() {
    const auto results = sdetree::acceptance::run_all(1);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%s\n", sdetree::acceptance::format_line(r).c_str());
        all_pass = all_pass && r.pass;
    }
    std::printf("%s\n", all_pass ? "acceptance: ALL PASS" : "acceptance: FAILURES");
    return all_pass ? 0 : 1;
}
