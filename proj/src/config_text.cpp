#include "ventus/config_text.hpp"

#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "ventus/error.hpp"
#include "ventus/io_util.hpp"

namespace ventus {

boost::property_tree::ptree parse_ini(const std::string& text) {
    boost::property_tree::ptree pt;
    std::istringstream in(text);
    try {
        boost::property_tree::read_ini(in, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ParseError(e.line(), e.message());
    }
    return pt;
}

bool config_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config key '" + key + "': expected true or false, got '" + v + "'");
}

int config_int(const std::string& key, const std::string& v) {
    try {
        return static_cast<int>(parse_integer(v));
    } catch (const ValidationError&) {
        throw ValidationError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

double config_real(const std::string& key, const std::string& v) {
    try {
        return parse_double(v);
    } catch (const ValidationError&) {
        throw ValidationError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

std::vector<double> config_reals(const std::string& key, const std::string& v) {
    std::vector<double> out;
    if (trim(v).empty()) return out;
    for (const auto& f : split(v, ',')) out.push_back(config_real(key, std::string(trim(f))));
    return out;
}

}  // namespace ventus
