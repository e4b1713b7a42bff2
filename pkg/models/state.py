from typing import Any, Dict, List, TypedDict


class RunReport(TypedDict, total=False):
    command: str
    seed: int
    alpha: float
    s_value: float
    argmin_k: int
    rows: List[Dict[str, Any]]
    summary: Dict[str, Any]
    measured: Dict[str, Any]
    passed: bool
    exit_code: int
    artifacts: Dict[str, str]
