import csv
import json
from pathlib import Path
from typing import Dict, Iterable, List, Sequence


class FileHandler:
    """Handles file operations: CSV and JSON reading/writing and output directories."""

    @staticmethod
    def ensure_dir(path: Path) -> Path:
        """Creates a directory (and parents) if needed and returns it."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def load_csv(file_path: Path) -> List[List[str]]:
        """
        Loads all data from a CSV file and returns as list of lists.
        Blank lines and lines starting with '#' are skipped.

        Args:
            file_path: Path to the CSV file to load.

        Returns:
            List of rows, where each row is a list of strings.
        """
        result = []
        with open(file_path, 'r', newline='') as csvfile:
            csvreader = csv.reader(csvfile, delimiter=',', quotechar='"')
            for row in csvreader:
                if not row or row[0].lstrip().startswith('#'):
                    continue
                result.append(row)
        return result

    @staticmethod
    def write_csv(file_path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        """
        Writes a header plus rows to a CSV file, replacing any previous content.

        Args:
            file_path: Destination path.
            header: Column names.
            rows: Row values, converted with str().

        Returns:
            The path written.
        """
        file_path = Path(file_path)
        FileHandler.ensure_dir(file_path.parent)
        with open(file_path, 'w', newline='') as csvfile:
            writer = csv.writer(csvfile, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow(row)
        return file_path

    @staticmethod
    def write_json(file_path: Path, obj) -> Path:
        """Writes `obj` as indented JSON with sorted keys so reruns produce identical bytes."""
        file_path = Path(file_path)
        FileHandler.ensure_dir(file_path.parent)
        with open(file_path, 'w') as f:
            json.dump(obj, f, indent=2, sort_keys=True)
            f.write("\n")
        return file_path

    @staticmethod
    def read_json(file_path: Path):
        """Reads a JSON document."""
        with open(file_path, 'r') as f:
            return json.load(f)

    @staticmethod
    def load_human_accuracy(file_path: Path) -> Dict[int, float]:
        """
        Loads the operator-filled per-task human accuracy table.

        Rows are `task_id,accuracy` with accuracy either a fraction or a percentage.
        A missing file yields an empty table.
        """
        file_path = Path(file_path)
        if not file_path.exists():
            return {}
        table = {}
        for row in FileHandler.load_csv(file_path):
            if len(row) < 2 or not row[0].strip().isdigit():
                continue
            accuracy = float(row[1])
            table[int(row[0])] = accuracy / 100.0 if accuracy > 1.0 else accuracy
        return table
