#pragma once

namespace anat9 {
int cli_main(int argc, char** argv);
}
