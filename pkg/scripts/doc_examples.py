"""Extract and run the Python code examples of markdown files."""

import io
import os
import re
import sys
import traceback
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from typing import Any, TypedDict


class CodeBlock(TypedDict):
    """A fenced ```python block."""

    code: str
    start_line: int
    end_line: int


def extract_code_blocks(markdown_content: str) -> list[CodeBlock]:
    """All ```python blocks with the lines they start and end on."""
    code_blocks = []
    for match in re.finditer(r"```python\n(.*?)```", markdown_content, re.DOTALL):
        code_blocks.append(
            CodeBlock(
                code=match.group(1).strip(),
                start_line=markdown_content[: match.start()].count("\n") + 1,
                end_line=markdown_content[: match.end()].count("\n") + 1,
            )
        )
    return code_blocks


def execute_code(code: str, namespace: dict[str, Any]) -> tuple[str, str, Exception | None]:
    """
    Execute ``code`` in ``namespace``.

    Returns:
        (stdout, stderr, exception)
    """
    namespace.setdefault("__builtins__", __builtins__)
    stdout_capture = io.StringIO()
    stderr_capture = io.StringIO()
    exception = None
    try:
        with redirect_stdout(stdout_capture), redirect_stderr(stderr_capture):
            exec(code, namespace)
    except Exception as e:
        exception = e
        stderr_capture.write(traceback.format_exc())
    return stdout_capture.getvalue().rstrip(), stderr_capture.getvalue().rstrip(), exception


def run_markdown_file(file_path: Path, workdir: Path | None = None) -> list[dict[str, Any]]:
    """
    Run every Python block of a markdown file in one shared namespace.

    Later blocks may use names defined by earlier ones, the way a reader
    would run them one after another. ``workdir`` becomes the current
    directory while the blocks run, so examples that write files stay out
    of the source tree.
    """
    import numpy as np

    import graphonlqr

    namespace: dict[str, Any] = {"__name__": "__main__", "__file__": str(file_path)}
    namespace.update({"np": np, "graphonlqr": graphonlqr})
    results = []
    previous = Path.cwd()
    if workdir is not None:
        os.chdir(workdir)
    try:
        for i, block in enumerate(extract_code_blocks(file_path.read_text(encoding="utf-8"))):
            stdout, stderr, exception = execute_code(block["code"], namespace)
            results.append(
                {
                    "block_index": i,
                    "line_number": block["start_line"],
                    "code": block["code"],
                    "success": exception is None,
                    "stdout": stdout,
                    "stderr": stderr,
                    "exception": exception,
                }
            )
    finally:
        os.chdir(previous)
    return results


def main() -> int:
    if len(sys.argv) < 2:
        print("Usage: python scripts/doc_examples.py <markdown_file>")
        return 1
    file_path = Path(sys.argv[1])
    if not file_path.exists():
        print(f"Error: File not found: {file_path}")
        return 1
    results = run_markdown_file(file_path)
    failed = [r for r in results if not r["success"]]
    print(f"{file_path}: {len(results)} examples, {len(failed)} failed")
    for result in failed:
        print(f"FAILED (line {result['line_number']}): {result['exception']}")
        if result["stderr"]:
            print(result["stderr"])
    return 0 if not failed else 1


if __name__ == "__main__":
    sys.exit(main())
