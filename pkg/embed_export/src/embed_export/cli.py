"""embed-export command line front end."""

import argparse
import sys

from .exporter import ExportError, ExportJob, export


def build_parser():
    ap = argparse.ArgumentParser(
        prog="embed-export",
        description="Export pretrained speech-encoder embeddings for a dataset "
        "manifest as a W2VE sidecar file.",
    )
    ap.add_argument("--manifest", required=True, help="dataset manifest CSV (id,path,label,participant,split)")
    ap.add_argument("--model", required=True, help="pretrained checkpoint id or local directory")
    ap.add_argument("--out", required=True, help="output sidecar path (.w2ve)")
    ap.add_argument("--batch", type=int, default=1, help="segments per inference batch (default 1)")
    ap.add_argument("--skip-errors", action="store_true", help="log and skip undecodable segments instead of aborting")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    job = ExportJob(
        manifest=args.manifest,
        model_id=args.model,
        out_path=args.out,
        batch=args.batch,
        skip_errors=args.skip_errors,
    )
    try:
        result = export(job)
    except ExportError as exc:
        print("embed-export: error: %s" % exc, file=sys.stderr)
        return 2
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print("embed-export: error: %s" % exc, file=sys.stderr)
        return 2
    print(
        "wrote %d embeddings (dim %d) to %s%s"
        % (
            result.written,
            result.dim,
            args.out,
            ", skipped %d" % len(result.skipped) if result.skipped else "",
        ),
        file=sys.stderr,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
