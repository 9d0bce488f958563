import threading
import time

from headmodel.utils.parallel import map_items


def test_results_keep_input_order():
    """Test threaded results come back in input order."""
    def slow_square(x):
        time.sleep(0.001 * (5 - x))
        return x * x

    assert map_items(slow_square, range(5), threads=3) == [0, 1, 4, 9, 16]


def test_single_thread_runs_inline():
    """Test threads=1 runs on the calling thread."""
    caller = threading.get_ident()

    idents = map_items(lambda _: threading.get_ident(), range(3), threads=1)

    assert idents == [caller] * 3
