import signal
import sys
import threading
from unittest.mock import MagicMock, patch

from signals import SignalHandler


class TestSignalHandler:
    """Test cases for SignalHandler class."""

    def setup_method(self):
        """Reset the singleton instance before each test."""
        SignalHandler._instance = None

    def test_singleton_pattern(self):
        """Test that every caller shares one handler and one flag."""
        first = SignalHandler()
        first.shutdown_requested = True
        assert SignalHandler() is first
        assert SignalHandler().is_shutdown_requested is True

    def test_reset_clears_request(self):
        """Test that reset clears a pending shutdown."""
        handler = SignalHandler()
        handler.shutdown_requested = True
        handler.reset()
        assert handler.is_shutdown_requested is False

    def test_interrupt_finishes_current_batch(self):
        """Test that SIGINT only raises the flag and says so."""
        handler = SignalHandler()
        with patch('builtins.print') as mock_print, patch('signals.sys.exit') as mock_exit:
            handler._interrupt_catch(signal.SIGINT, None)
            handler._interrupt_catch(signal.SIGINT, None)
        assert handler.shutdown_requested is True
        assert "Finishing the current batch" in str(mock_print.call_args)
        mock_exit.assert_not_called()

    @patch('signals.sys.exit')
    @patch('signals.threading.enumerate')
    @patch('signals.threading.main_thread')
    def test_terminate_joins_workers_and_exits(self, mock_main_thread, mock_enumerate, mock_exit):
        """Test that SIGTERM waits for worker threads, skipping the main thread, then exits 0."""
        main_thread, worker = MagicMock(), MagicMock()
        mock_main_thread.return_value = main_thread
        mock_enumerate.return_value = [main_thread, worker]
        handler = SignalHandler()

        with patch('builtins.print'):
            handler._exit_catch(signal.SIGTERM, None)

        assert handler.shutdown_requested is True
        worker.join.assert_called_once_with(timeout=2.0)
        main_thread.join.assert_not_called()
        mock_exit.assert_called_once_with(0)

    @patch('signals.threading.enumerate')
    @patch('signals.threading.main_thread')
    def test_terminate_tolerates_unstarted_thread(self, mock_main_thread, mock_enumerate):
        """Test that a thread that cannot be joined is skipped."""
        main_thread = threading.current_thread()
        mock_main_thread.return_value = main_thread
        unstarted = MagicMock()
        unstarted.join.side_effect = RuntimeError("cannot join thread before it is started")
        mock_enumerate.return_value = [main_thread, unstarted]

        with patch('builtins.print'), patch('signals.sys.exit') as mock_exit:
            SignalHandler()._exit_catch(signal.SIGTERM, None)
        mock_exit.assert_called_once_with(0)

    @patch('signals.signal.signal')
    def test_setup_signal_handlers(self, mock_signal):
        """Test that SIGINT and SIGTERM are registered."""
        handler = SignalHandler()
        handler.setup_signal_handlers()
        registered = {call.args[0]: call.args[1] for call in mock_signal.call_args_list}
        assert registered == {signal.SIGINT: handler._interrupt_catch, signal.SIGTERM: handler._exit_catch}

    def test_format_exception_system_exit(self):
        """Test format_exception returns None for SystemExit."""
        assert SignalHandler.format_exception(SystemExit, None, None) is None

    def test_format_exception(self):
        """Test the crash report contents."""
        try:
            raise ValueError("loss is not finite")
        except ValueError:
            report = SignalHandler.format_exception(*sys.exc_info(), thread_name="suite_1")
        assert report.startswith("Error time: ")
        assert "Exception in thread: suite_1" in report
        assert "ValueError: loss is not finite" in report
        assert report.endswith(f"{'-' * 30}\n\n")
