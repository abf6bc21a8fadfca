#ifndef OPVI_ACCEPTANCE_HPP
#define OPVI_ACCEPTANCE_HPP

#include <cstddef>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace opvi {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;   ///< measured values against the pinned tolerances
    double seconds = 0.0;
};

struct AcceptanceOptions {
    std::set<int> only;             ///< empty = all twelve
    std::size_t parallelism = 1;    ///< workers for independent seeds
    std::filesystem::path scratch;  ///< grid outputs; empty = temp directory
    std::function<void(const CriterionResult&)> on_result;
};

inline constexpr int kCriteriaCount = 12;

/// Title of criterion `id` (1..12).
std::string criterion_name(int id);

/// Runs the selected criteria in order. A criterion that throws is
/// reported as failed with the exception text.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options);

/// "PASS  #3  <name>  (12.3 s)  <detail>"
std::string format_result(const CriterionResult& r);

} // namespace opvi

#endif // OPVI_ACCEPTANCE_HPP
