#pragma once

#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

namespace ventus {

// INI text to a property tree; syntax errors become ParseError with the line.
boost::property_tree::ptree parse_ini(const std::string& text);

// Typed values of `key = value` entries; errors name the key.
bool config_bool(const std::string& key, const std::string& v);
int config_int(const std::string& key, const std::string& v);
double config_real(const std::string& key, const std::string& v);
std::vector<double> config_reals(const std::string& key, const std::string& v);

}  // namespace ventus
