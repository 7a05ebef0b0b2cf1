#pragma once

#include <istream>
#include <string>
#include <vector>

namespace mgd::csv {

// RFC 4180 style: comma separated, double-quote quoting, "" escapes.
// Returns false at end of input.
bool read_row(std::istream& in, std::vector<std::string>& fields);

std::string quote(const std::string& field);

}  // namespace mgd::csv
