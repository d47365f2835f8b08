// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3d/cli.hpp"

int main(int argc, char** argv) { return m3d::cli::dispatch(argc, argv); }
