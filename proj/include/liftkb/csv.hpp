#ifndef LIFTKB_CSV_HPP
#define LIFTKB_CSV_HPP

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

namespace liftkb {

// RFC 4180 quoting: fields containing a comma, quote, CR or LF are wrapped in
// quotes with embedded quotes doubled. Rows end with LF.
std::string csv_field(std::string_view field);
void write_csv_row(std::ostream& out, std::span<const std::string> fields);

}  // namespace liftkb

#endif  // LIFTKB_CSV_HPP
