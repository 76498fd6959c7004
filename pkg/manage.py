#!/usr/bin/env python
import os
import sys

if __name__ == "__main__":
    os.environ.setdefault("NANOMOTION_G2_OUT", "out")

    from nanomotion_g2.cli import execute_from_command_line

    sys.exit(execute_from_command_line(sys.argv))
