#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdetree::acceptance {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string details;
};

/// Runs the selected criteria (ids 1..11) with the given base seed.
std::vector<CriterionResult> run(const std::vector<int>& criteria, std::uint64_t seed);

std::vector<CriterionResult> run_all(std::uint64_t seed);

/// One line per criterion: "[ 3] PASS residual-contract (...)".
std::string format_line(const CriterionResult& r);

}  // namespace sdetree::acceptance
