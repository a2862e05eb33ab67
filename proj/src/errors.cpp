#include "dice/errors.hpp"
