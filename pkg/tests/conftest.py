import copy

import pytest


def tiny_instance_dict(n_cities: int = 3) -> dict:
    """Small hand-written instance: cities on a line, one part, one supplier."""
    ids = [f"L{i}" for i in range(n_cities)]
    locations = [
        {"id": c, "label": f"City {i}", "latitude": -23.0 + i, "longitude": -46.0, "postal_code": f"{i:02d}000-000"}
        for i, c in enumerate(ids)
    ]
    matrix = [
        {"origin": a, "destination": b, "distance_m": 100_000.0 * abs(i - j), "travel_time_s": 3_600.0 * abs(i - j)}
        for i, a in enumerate(ids)
        for j, b in enumerate(ids)
        if a != b
    ]
    delivery = [
        {"origin": a, "destination": b, "cost": 20.0 + 5 * abs(i - j), "time_hours": 24.0 * abs(i - j)}
        for i, a in enumerate(ids)
        for j, b in enumerate(ids)
        if a != b
    ]
    return {
        "locations": locations,
        "parts": [
            {
                "id": "P1",
                "width": 50,
                "height": 40,
                "depth": 30,
                "print_time_hours": 3.0,
                "print_unit_cost": 22.0,
                "internal_order_cost": 5.0,
                "internal_order_time_hours": 1.0,
            }
        ],
        "suppliers": [
            {
                "id": "S1",
                "price": {"P1": 176.0},
                "order_time_hours": {"P1": 24.0},
                "delivery_cost": 30.0,
                "delivery_time_hours": 48.0,
            }
        ],
        "orders": [{"client": c, "part": "P1", "quantity": 2 + k} for k, c in enumerate(ids)],
        "economics": {
            "facility_fixed_cost": 20000.0,
            "printer_fixed_cost": 11500.0,
            "printer_capacity_hours": 2112.0,
            "max_printers": 5,
            "delivery": delivery,
        },
        "matrix": matrix,
    }


@pytest.fixture
def tiny_dict():
    return copy.deepcopy(tiny_instance_dict())


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
