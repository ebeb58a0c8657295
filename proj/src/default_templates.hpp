#pragma once

#include <map>
#include <string>

namespace ontoforge::detail {

/// File name -> body of every template shipped in templates/.
const std::map<std::string, std::string>& default_template_files();

}  // namespace ontoforge::detail
