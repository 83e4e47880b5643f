import stat
import textwrap

import pytest

COPY_SEPARATOR = """
import argparse, shutil, os
p = argparse.ArgumentParser()
p.add_argument("--input", required=True)
p.add_argument("--outdir", required=True)
p.add_argument("--num-speakers", type=int, default=2)
a = p.parse_args()
for i in range(1, a.num_speakers + 1):
    shutil.copyfile(a.input, os.path.join(a.outdir, f"est{i}.wav"))
"""


def write_separator_script(directory, name, body):
    """Drop an executable python script into directory and return a
    command template for it."""
    path = directory / name
    path.write_text("#!/usr/bin/env python3\n" + textwrap.dedent(body))
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return f"python3 {path} --input {{input}} --outdir {{outdir}} --num-speakers {{num_speakers}}"


@pytest.fixture(scope="session")
def copy_separator_cmd(tmp_path_factory):
    """Command template for a dummy separator that copies the mixture
    into every estimate file."""
    directory = tmp_path_factory.mktemp("dummy_sep")
    return write_separator_script(directory, "copysep.py", COPY_SEPARATOR)
