#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ifg/eval.hpp"
#include "ifg/experiment.hpp"

namespace ifgkit {

/// Plain-text table with one space-padded column per header. Numeric cells are
/// right-aligned, text cells left-aligned. No rows prints just the header rule.
void print_table(std::ostream& os, const std::vector<std::string>& headers,
                 const std::vector<std::vector<std::string>>& rows);

/// class, bucket, mode, AP (percent; "-" for skipped classes).
void print_report(std::ostream& os, std::span<const ifg::ApRow> rows);
/// method, TAFE, PSCL, car AP, ped AP, cyc AP.
void print_report(std::ostream& os, std::span<const ifg::AblationRow> rows);

}  // namespace ifgkit
